"""Builds the optional Cython kernels. The package works without them."""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("PLAYLIST_TITLEGEN_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "playlist_titlegen._kernels",
                    ["src/playlist_titlegen/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )

setup(ext_modules=ext_modules)
