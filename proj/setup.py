from pybind11.setup_helpers import Pybind11Extension, build_ext
from setuptools import setup

ext = Pybind11Extension(
    "isdiff._isdiff",
    sources=[
        "src/model.cpp",
        "src/catalog.cpp",
        "src/stats.cpp",
        "src/simulate.cpp",
        "src/action.cpp",
        "src/expansion.cpp",
        "src/pde1d.cpp",
        "python/bindings.cpp",
    ],
    include_dirs=["include", "vendor"],
    cxx_std=20,
)

setup(ext_modules=[ext], cmdclass={"build_ext": build_ext})
