"""Some common helper functions for the test suite."""

import os.path
import random
from typing import Tuple

from cat_dse.planner import (
    CoreAllocator, EdpuPlan, ParallelMode, PrgKind, PrgNode, assemble_plan
)
from cat_dse.platform import (
    PlatformProfile, derive_plio_aie, read_profile, vck5000_default
)
from cat_dse.pu_design import build_spec, geometry_for, max_mmsz
from cat_dse.workload import (
    MatMulRole, MatMulSpec, Stage, TransformerConfig, load_config,
    read_config
)

GOLDEN_DIR = os.path.join(os.path.dirname(__file__), 'golden')


def bert() -> TransformerConfig:
    return read_config('bert-base')


def vit() -> TransformerConfig:
    return read_config('vit-base')


def vck5000() -> PlatformProfile:
    return vck5000_default()


def limited() -> PlatformProfile:
    return read_profile('vck5000-limited')


def golden(filename: str) -> str:
    with open(os.path.join(GOLDEN_DIR, filename), encoding='utf-8') as stream:
        return stream.read()


def random_config(rng: random.Random) -> TransformerConfig:
    head = rng.choice([1, 2, 3, 4, 6, 8, 12, 16])
    return TransformerConfig(
        head=head, embed_dim=head * rng.choice([16, 32, 64, 128]),
        dff=rng.choice([256, 512, 1024, 2048, 3072, 4096]),
        seq_len=rng.choice([64, 128, 197, 256, 512]),
        layers=rng.randint(1, 24), data_bits=rng.choice([8, 16]),
        name='random')


def random_profile(rng: random.Random) -> PlatformProfile:
    t_window = rng.choice([200, 409, 500, 1125])
    return PlatformProfile(
        name='random', total_aie=rng.randint(64, 600),
        total_buffer_bytes=rng.randint(1 << 20, 64 << 20),
        m_window_bytes=rng.choice([8192, 16384, 32768, 65536]),
        t_calc_ns=t_window * rng.randint(2, 6) + rng.randint(0, 100),
        t_window_ns=t_window, aie_clock_ghz=1.25, pl_clock_mhz=300.0)


def one_large_plan() -> Tuple[EdpuPlan, PlatformProfile]:
    """A plan holding a single Large PU, for the golden graph files."""
    cfg = load_config({'head': 1, 'embed_dim': 256, 'dff': 256,
                       'seq_len': 256, 'layers': 1, 'data_bits': 8},
                      name='one-large')
    p = vck5000()
    large = build_spec(geometry_for('large'), derive_plio_aie(p),
                       max_mmsz(p, cfg.data_bits))
    prg = PrgNode(
        id='mha.proj_lb', kind=PrgKind.PROJ_LB, stage=Stage.MHA,
        assigned_mms=(MatMulSpec(256, 256, 256, 1, Stage.MHA,
                                 MatMulRole.PROJ_LB),),
        allocated_pus=(CoreAllocator().new(large),))
    plan = assemble_plan(cfg, p, True, ParallelMode.SERIAL,
                         ParallelMode.SERIAL, 1, (prg,), (), (large,), 0)
    return plan, p
