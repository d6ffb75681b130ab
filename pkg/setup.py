"""Builds the optional compiled stepper; the package falls back to numpy without it."""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("NEUTRAL_SPDE_LAB_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "neutral_spde_lab._stepper",
                    ["src/neutral_spde_lab/_stepper.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
