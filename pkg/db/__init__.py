# Makes 'db' a Python package
