import numpy
from setuptools import Extension, setup

# The compiled contention kernel is optional: without Cython (or a working C
# compiler) the package installs pure-Python and selects the numpy fallback
# kernel at import time.
try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext = Extension(
        "doc_sim.sim._kernel",
        ["src/doc_sim/sim/_kernel.pyx"],
        include_dirs=[numpy.get_include()],
    )
    ext_modules = cythonize(ext, language_level=3)

setup(ext_modules=ext_modules)
