"""CLI runners, one module per kinoplan subcommand."""
