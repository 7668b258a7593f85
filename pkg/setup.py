"""Build the optional compiled kernels.

The package works without them; ``smartdiary.kernels`` falls back to the
pure-Python implementation when the extension is missing.
"""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("SMARTDIARY_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "smartdiary._ckernels",
                    ["src/smartdiary/_ckernels.pyx"],
                    extra_compile_args=["-O3"],
                    libraries=["m"],
                    optional=True,
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "initializedcheck": False,
            },
        )

setup(ext_modules=ext_modules)
