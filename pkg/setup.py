import io
import re
from setuptools import setup, find_packages


def readfile(filename: str) -> str:
    with io.open(filename, encoding="utf-8") as stream:
        return stream.read()


readme = readfile("README.rst").split("\n")[3:]  # skip title
requires = readfile("requirements.txt").split("\n")
version_match = re.search("__version__ = '(.+)'",
                          readfile("src/cat_dse/__init__.py"))
assert version_match is not None, "version not found"
version = version_match.group(1)


# make entry point specifications
def geometry(name: str) -> str:
    class_name = name.capitalize()
    return f"{name} = cat_dse.geometry.{name}:{class_name}PuGeometry"


setup(
    name='cat-dse',
    version=version,
    license='BSD',
    description=readme[0],
    long_description="\n".join(readme[2:]),
    zip_safe=False,
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Environment :: Console',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: BSD License',
        'Operating System :: OS Independent',
        'Programming Language :: Python',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
        'Programming Language :: Python :: 3.12',
        'Programming Language :: Python :: Implementation :: CPython',
        'Topic :: Scientific/Engineering',
        'Topic :: System :: Hardware',
    ],
    platforms='any',
    packages=find_packages('src'),
    package_dir={'': 'src'},
    package_data={'cat_dse': ['py.typed', 'profiles/*.json',
                              'models/*.json']},
    include_package_data=True,
    python_requires='>=3.9',
    install_requires=requires,
    tests_require=['pytest', 'pytest-cov'],
    entry_points={
        'console_scripts': [
            'cat-dse = cat_dse.cli:main',
        ],
        'cat_dse.pu_geometry': [
            geometry('large'),
            geometry('standard'),
            geometry('small'),
        ],
    }
)
