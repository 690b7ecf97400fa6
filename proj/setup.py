from pybind11.setup_helpers import Pybind11Extension, build_ext
from setuptools import setup

core_sources = [
    "src/error.cpp",
    "src/volume.cpp",
    "src/gzip.cpp",
    "src/volume_io_nrrd.cpp",
    "src/volume_io_nifti.cpp",
    "src/voxel_ops.cpp",
    "src/dataset.cpp",
    "src/defects.cpp",
    "src/autodiff.cpp",
    "src/model.cpp",
    "src/losses.cpp",
    "src/optim.cpp",
    "src/trainer_config.cpp",
    "src/checkpoint.cpp",
    "src/trainer.cpp",
    "src/registration.cpp",
]

ext = Pybind11Extension(
    "skullkit._core",
    sources=core_sources + ["bindings/py_core.cpp"],
    include_dirs=["include", "vendor"],
    libraries=["z"],
    cxx_std=20,
)

setup(ext_modules=[ext], cmdclass={"build_ext": build_ext})
