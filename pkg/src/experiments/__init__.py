"""Studies and file formats built on the numerical core."""
