from setuptools import setup, Extension
from Cython.Build import cythonize
import numpy as np

# -ffp-contract=off keeps the compiled scans bit-identical to the pure
# Python backend (no fused multiply-add reassociation).
ext_modules = [
    Extension(
        "nlstereo.filtering._kernels",
        ["src/nlstereo/filtering/_kernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
]

setup(
    ext_modules=cythonize(
        ext_modules,
        compiler_directives={
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "language_level": "3",
        },
    ),
)
