import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("JUMPCTL_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [Extension("jumpctl._kernels", ["src/jumpctl/_kernels.pyx"],
                       include_dirs=[np.get_include()])],
            language_level=3,
        )

setup(ext_modules=ext_modules)
