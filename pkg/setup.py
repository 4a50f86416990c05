"""Build script: compiles the tracking kernel when Cython is available.

The package works without the extension (a NumPy fallback is selected at
import time), so a missing compiler only costs speed.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext = Extension(
        "momentmix._kernel",
        ["src/momentmix/_kernel.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    ext_modules = cythonize([ext], language_level="3")

setup(ext_modules=ext_modules)
