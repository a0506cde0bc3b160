# Sphinx configuration for the mipkd documentation.
# https://www.sphinx-doc.org/en/master/usage/configuration.html

project = "mipkd"
copyright = "2026, Canonical Ltd"
author = "Launchpad developers"

exclude_patterns = ["_build"]

html_theme = "alabaster"
