import json
import random

import pytest

from cat_dse.errors import ConfigError
from cat_dse.platform import (
    PlatformProfile, check_profile, derive_plio_aie, load_profile,
    read_profile, serialize_profile
)
from test.common import limited, random_profile, vck5000


def test_vck5000_default() -> None:
    p = vck5000()
    assert p.name == 'vck5000'
    assert p.total_aie == 400
    assert p.m_window_bytes == 32768
    assert derive_plio_aie(p) == 4


def test_shipped_profiles() -> None:
    assert derive_plio_aie(read_profile('vck5000-peak')) == 4
    assert limited().total_aie == 64


def test_profile_file(tmp_path) -> None:
    filename = tmp_path / "board.json"
    filename.write_text(json.dumps(dict(serialize_profile(vck5000()),
                                        name='board', total_aie=128)))
    p = read_profile(str(filename))
    assert p.name == 'board'
    assert p.total_aie == 128


def test_profile_search_dir(tmp_path, monkeypatch) -> None:
    (tmp_path / "tiny.json").write_text(json.dumps(
        dict(serialize_profile(vck5000()), name='tiny', total_aie=32)))
    assert read_profile('tiny', search_dir=str(tmp_path)).total_aie == 32
    monkeypatch.setenv('CAT_DSE_PROFILE_DIR', str(tmp_path))
    assert read_profile('tiny').total_aie == 32
    with pytest.raises(ConfigError, match="vck5000 not found"):
        read_profile('vck5000')


def test_profile_errors() -> None:
    document = serialize_profile(vck5000())
    with pytest.raises(ConfigError, match="unknown .* key.*: cores"):
        load_profile(dict(document, cores=4))
    with pytest.raises(ConfigError, match="missing .* key.*: t_calc_ns"):
        load_profile({k: v for k, v in document.items()
                      if k != 't_calc_ns'})
    with pytest.raises(ConfigError, match="t_window_ns must be positive"):
        load_profile(dict(document, t_window_ns=0))
    with pytest.raises(ConfigError, match="total_aie must be an integer"):
        load_profile(dict(document, total_aie=400.0))
    with pytest.raises(ConfigError, match="m_window_bytes must be at least"):
        check_profile(vck5000()._replace(m_window_bytes=2))
    with pytest.raises(ConfigError, match="not found"):
        read_profile('no-such-board')


def test_plio_aie_floor() -> None:
    p = vck5000()
    assert derive_plio_aie(p._replace(t_calc_ns=4499)) == 3
    assert derive_plio_aie(p._replace(t_calc_ns=100)) == 1


def test_plio_aie_monotone() -> None:
    rng = random.Random(4)
    for _ in range(1000):
        p = random_profile(rng)
        plio_aie = derive_plio_aie(p)
        assert plio_aie >= 1
        faster = p._replace(t_window_ns=p.t_window_ns / 2)
        slower = p._replace(t_calc_ns=p.t_calc_ns * 2)
        assert derive_plio_aie(faster) >= plio_aie
        assert derive_plio_aie(slower) >= plio_aie
        assert derive_plio_aie(p._replace(t_calc_ns=p.t_calc_ns / 2)) \
            <= plio_aie


def test_profile_namedtuple() -> None:
    p = vck5000()
    assert isinstance(p, PlatformProfile)
    assert serialize_profile(p)['t_calc_ns'] == 4500
