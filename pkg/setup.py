# A minimal setup.py file.
# All necessary information is provided in setup.cfg.
# Having this file allows editable installs, see
# https://setuptools.readthedocs.io/en/latest/userguide/quickstart.html#id10

import setuptools
setuptools.setup()
