import pytest

from cat_dse.geometry.large import LargePuGeometry
from cat_dse.geometry.small import SmallPuGeometry
from cat_dse.plugin import (
    PU_GEOMETRY_GROUP, find_plugin, plugin_names, register_plugin
)
from cat_dse.pu_design import build_spec, geometry_for


def test_plugin_bad_group() -> None:
    with pytest.raises(ImportError, match="plugin group blablabla not found"):
        find_plugin("blablabla", "boo")
    with pytest.raises(ImportError, match="plugin group blablabla not found"):
        register_plugin("blablabla", "boo", type(None))
    with pytest.raises(ImportError, match="plugin group blablabla not found"):
        plugin_names("blablabla")


def test_plugin_not_found() -> None:
    with pytest.raises(ImportError, match="pu_geometry.huge not found"):
        find_plugin(PU_GEOMETRY_GROUP, "huge")


def test_plugin_builtin() -> None:
    assert find_plugin(PU_GEOMETRY_GROUP, "large") is LargePuGeometry
    assert {"large", "standard", "small"} <= set(
        plugin_names(PU_GEOMETRY_GROUP))


def test_plugin_register_not_forced() -> None:

    class Plugin(SmallPuGeometry):
        pass

    assert not register_plugin(PU_GEOMETRY_GROUP, "large", Plugin)
    assert find_plugin(PU_GEOMETRY_GROUP, "large") is not Plugin


def test_plugin_register_forced() -> None:

    class PluginOld(SmallPuGeometry):
        name = 'Tiny'

    class PluginNew(LargePuGeometry):
        name = 'Tiny'

    assert register_plugin(PU_GEOMETRY_GROUP, "xxx_tiny", PluginOld)
    assert find_plugin(PU_GEOMETRY_GROUP, "xxx_tiny") is PluginOld
    assert "xxx_tiny" in plugin_names(PU_GEOMETRY_GROUP)
    assert not register_plugin(PU_GEOMETRY_GROUP, "xxx_tiny", PluginNew)
    assert find_plugin(PU_GEOMETRY_GROUP, "xxx_tiny") is PluginOld
    assert register_plugin(PU_GEOMETRY_GROUP, "xxx_tiny", PluginNew,
                           force=True)
    assert find_plugin(PU_GEOMETRY_GROUP, "xxx_tiny") is PluginNew
    spec = build_spec(geometry_for("XXX_TINY"), 4, 64)
    assert spec.name == 'Tiny'
    assert spec.core_count == 64
