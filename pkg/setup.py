import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension("arctic._flipcore", ["src/arctic/_flipcore.pyx"],
              include_dirs=[numpy.get_include()], extra_compile_args=["-O3"]),
    Extension("arctic._solvercore", ["src/arctic/_solvercore.pyx"],
              include_dirs=[numpy.get_include()], extra_compile_args=["-O3"]),
]

setup(package_dir={"": "src"}, ext_modules=cythonize(extensions, language_level=3))
