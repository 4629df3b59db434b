"""Build script for the optional Cython kernels.

The package works without them; ``tempora.kernels`` falls back to numpy
when ``tempora._gibbs`` cannot be imported.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("TEMPORA_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "tempora._gibbs",
                    ["src/tempora/_gibbs.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3", "-ffast-math"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
