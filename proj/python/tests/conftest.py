import glob
import importlib.util
import os
import sys

# When run from the CMake build, load the staged module rather than any
# installed copy.
_stage = os.environ.get("ATTNTRACK_STAGE")
if _stage:
    pkg_dir = os.path.join(_stage, "attntrack")
    (ext_path,) = glob.glob(os.path.join(pkg_dir, "_core*.so")) or glob.glob(
        os.path.join(pkg_dir, "_core*.pyd"))
    core_spec = importlib.util.spec_from_file_location("attntrack._core", ext_path)
    core = importlib.util.module_from_spec(core_spec)
    core_spec.loader.exec_module(core)
    sys.modules["attntrack._core"] = core

    pkg_spec = importlib.util.spec_from_file_location(
        "attntrack", os.path.join(pkg_dir, "__init__.py"), submodule_search_locations=[pkg_dir])
    pkg = importlib.util.module_from_spec(pkg_spec)
    sys.modules["attntrack"] = pkg
    pkg_spec.loader.exec_module(pkg)
    pkg._core = core
    assert pkg.Label is core.Label
