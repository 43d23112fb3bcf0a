"""sagrape command handlers."""
