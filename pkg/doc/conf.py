# cat-dse documentation build configuration file.
#
# This file is execfile()d with the current directory set to its containing
# dir.

import re  # for extracting version


# -- General configuration -----------------------------------------------

# If your documentation needs a minimal Sphinx version, state it here.
needs_sphinx = '7.4'

# Add any Sphinx extension module names here, as strings. They can be
# extensions coming with Sphinx (named 'sphinx.ext.*') or your custom ones.
extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.intersphinx',
    'sphinx.ext.coverage',
    'sphinx.ext.viewcode',
    'cat_dse']

# The master toctree document.
master_doc = 'index'

# General information about the project.
project = 'cat-dse'
copyright = '2026, the cat-dse developers'

# The full version, including alpha/beta/rc tags.
with open("../src/cat_dse/__init__.py", "rt") as version_file:
    release = re.search("__version__ = '(.+)'", version_file.read()).group(1)
# The short X.Y version.
version = '.'.join(release.split('.')[:2])

# List of patterns, relative to source directory, that match files and
# directories to ignore when looking for source files.
exclude_patterns = ['_build']

# The name of the Pygments (syntax highlighting) style to use.
pygments_style = 'sphinx'


# -- Options for cat-dse -------------------------------------------------

cat_dse_default_profile = 'vck5000'


# -- Options for HTML output ---------------------------------------------

# Output file base name for HTML help builder.
htmlhelp_basename = 'cat-dsedoc'


# -- Options for LaTeX output --------------------------------------------

# Grouping the document tree into LaTeX files. List of tuples
# (source start file, target name, title, author, documentclass).
latex_documents = [
    ('index', 'cat-dse.tex', 'cat-dse Documentation',
     'the cat-dse developers', 'manual'),
]


# -- Options for manual page output --------------------------------------

# One entry per manual page. List of tuples
# (source start file, name, description, authors, manual section).
man_pages = [
    ('index', 'cat-dse', 'cat-dse Documentation',
     ['the cat-dse developers'], 1)
]

intersphinx_mapping = {
    'python': ('https://docs.python.org/3/', None),
    'sphinx': ('https://www.sphinx-doc.org/en/master/', None),
    'networkx': ('https://networkx.org/documentation/stable/', None),
    'simpy': ('https://simpy.readthedocs.io/en/latest/', None),
}
