"""
    Plugin registry. PU geometry families are looked up by name in the
    ``cat_dse.pu_geometry`` group: first in the runtime store, then among
    installed entry points, and finally among the geometries shipped with
    the package, so that an uninstalled source tree still works.

    .. autofunction:: find_plugin

    .. autofunction:: register_plugin

    .. autofunction:: plugin_names
"""

import sys
if sys.version_info >= (3, 10):
    from importlib.metadata import entry_points, EntryPoint
else:
    from importlib_metadata import entry_points, EntryPoint
from importlib import import_module
from typing import Type, Any, Dict, List, Optional

PU_GEOMETRY_GROUP = 'cat_dse.pu_geometry'

_runtime_plugins: Dict[str, Dict[str, Type]] = {PU_GEOMETRY_GROUP: {}}

_builtin_plugins: Dict[str, Dict[str, str]] = {
    PU_GEOMETRY_GROUP: {
        'large': 'cat_dse.geometry.large:LargePuGeometry',
        'standard': 'cat_dse.geometry.standard:StandardPuGeometry',
        'small': 'cat_dse.geometry.small:SmallPuGeometry',
    }}


# wrapper to work around missing type annotations for entry_points function
def _entry_points(group: str, name: Optional[str] = None
                  ) -> List[EntryPoint]:
    if name is None:
        return list(entry_points(group=group))  # type: ignore
    return list(entry_points(group=group, name=name))  # type: ignore


def _check_group(group: str) -> None:
    if group not in _runtime_plugins:
        raise ImportError(f"plugin group {group} not found")


def _builtin_plugin(group: str, name: str) -> Optional[Type[Any]]:
    target = _builtin_plugins.get(group, {}).get(name)
    if target is None:
        return None
    module_name, _, class_name = target.partition(':')
    return getattr(import_module(module_name), class_name)


def find_plugin(group: str, name: str) -> Type[Any]:
    """Load a cat-dse plugin from the runtime store, the entry points,
    or the built-in plugins, in that order.
    """
    _check_group(group)
    try:
        return _runtime_plugins[group][name]
    except KeyError:
        for entry_point in _entry_points(group=group, name=name):
            return entry_point.load()
    klass = _builtin_plugin(group, name)
    if klass is not None:
        return klass
    raise ImportError(f"plugin {group}.{name} not found")


def register_plugin(group: str, name: str, klass: Type[Any],
                    force: bool = False) -> bool:
    """Register a cat-dse plugin into the runtime store.

    Unless *force* is set, a plugin that can already be found under
    *name* is kept and ``False`` is returned.
    """
    _check_group(group)
    known = (name in _runtime_plugins[group]
             or bool(_entry_points(group=group, name=name))
             or name in _builtin_plugins.get(group, {}))
    if not known or force:
        _runtime_plugins[group][name] = klass
        return True
    return False


def plugin_names(group: str) -> List[str]:
    """Sorted names of all plugins that :func:`find_plugin` can load."""
    _check_group(group)
    names = set(_runtime_plugins[group])
    names.update(ep.name for ep in _entry_points(group=group))
    names.update(_builtin_plugins.get(group, {}))
    return sorted(names)
