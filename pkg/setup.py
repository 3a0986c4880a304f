import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "therm2vis.quality._edgewidth",
                ["src/therm2vis/quality/_edgewidth.pyx"],
                include_dirs=[np.get_include()],
            )
        ],
        language_level=3,
    )

# The extension only accelerates the blur metric's edge scan; the package
# falls back to the pure-Python kernel when the build is unavailable.
setup(ext_modules=ext_modules)
