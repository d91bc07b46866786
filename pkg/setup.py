"""Build the optional compiled kernels.

The extension is marked optional: if compilation fails the package still
installs and runs on the numpy fallback.
"""

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# -ffp-contract=off keeps a*b+c from being fused so floats match numpy exactly.
ext = Extension(
    "contactkam._ckernels",
    ["src/contactkam/_ckernels.pyx"],
    include_dirs=[np.get_include()],
    extra_compile_args=["-O3", "-fopenmp", "-ffp-contract=off", "-fno-fast-math"],
    extra_link_args=["-fopenmp"],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    optional=True,
)

setup(ext_modules=cythonize([ext], compiler_directives={"language_level": 3}))
