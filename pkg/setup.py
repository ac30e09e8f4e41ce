import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = []
if cythonize is not None and not os.environ.get("TURBOGODEC_NO_EXT"):
    extensions = cythonize(
        [
            Extension(
                "turbogodec._bp_ext",
                ["src/turbogodec/_bp_ext.pyx"],
                include_dirs=[np.get_include()],
                # bit-identical results with the numpy kernel need plain IEEE ops
                extra_compile_args=["-O3", "-ffp-contract=off", "-fno-fast-math"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=extensions)
