import os

import numpy
from setuptools import Extension, setup

# The compiled core is optional: if Cython or a C compiler is missing, the
# package falls back to the pure-NumPy backend selected at import time.
ext_modules = []
if os.path.exists("src/gigaqbx/_core.pyx"):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "gigaqbx._core",
                    ["src/gigaqbx/_core.pyx"],
                    extra_compile_args=["-O3"],
                    include_dirs=[numpy.get_include()],
                )
            ],
            compiler_directives={"language_level": 3},
        )
    except ImportError:
        pass

setup(ext_modules=ext_modules)
