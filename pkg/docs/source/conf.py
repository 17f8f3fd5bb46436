# Configuration file for the Sphinx documentation builder.
#
# For the full list of built-in configuration values, see the documentation:
# https://www.sphinx-doc.org/en/master/usage/configuration.html

# -- Project information -----------------------------------------------------

project = "SOGM Decoder"
copyright = "2024, SOGM Decoder contributors"
author = "SOGM Decoder contributors"
release = "0.1.0"

# -- General configuration ---------------------------------------------------

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.napoleon",
]

templates_path = ["_templates"]
exclude_patterns = []

autodoc_member_order = "bysource"

# -- Options for HTML output -------------------------------------------------

extensions.append("sphinx_wagtail_theme")
html_theme = "sphinx_wagtail_theme"
html_theme_options = dict(
    project_name="SOGM Decoder",
    logo="",
    logo_alt="",
    logo_height=50,
    logo_url="/",
    logo_width=50,
)

html_static_path = []

# set up Django environment
import os
import sys
import django

sys.path.insert(0, os.path.abspath("../../sogm_decoder_backend"))
os.environ["DJANGO_SETTINGS_MODULE"] = "sogm_decoder_backend.settings"
django.setup()
