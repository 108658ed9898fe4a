import os

from setuptools import setup

ext_modules = []
if os.environ.get("FAIRROUND_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:  # pure-Python install; the numpy fallback is used
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "fairround._kernels",
                    ["src/fairround/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    # no -ffast-math: kernels must match the fallback bit for bit
                    extra_compile_args=["-O2", "-ffp-contract=off"],
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
