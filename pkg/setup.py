"""Build script: compiles the optional Cython kernel.

When Cython or a C compiler is unavailable the package still installs and
falls back to the NumPy kernels at import time.
"""

import os

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Skip the extension instead of failing the install."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing or broken
            print(f"warning: vnc._kernels not built ({exc}); using the Python kernels")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: vnc._kernels not built ({exc}); using the Python kernels")


ext_modules = []
if os.environ.get("VNC_NO_EXTENSION", "") in ("", "0"):
    try:
        import numpy  # noqa: F401
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [Extension("vnc._kernels", ["src/vnc/_kernels.pyx"], extra_compile_args=["-O3"])],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})
