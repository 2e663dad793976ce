import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "dgadapt.kernels._speedups",
                ["src/dgadapt/kernels/_speedups.pyx"],
                include_dirs=[np.get_include()],
            )
        ],
        language_level=3,
    )
except ImportError:
    # Pure-python kernels are selected at import time when the compiled
    # extension is unavailable.
    extensions = []

setup(ext_modules=extensions)
