"""sagrape utilities: logging setup and console tables."""
