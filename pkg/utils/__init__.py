# Shared helpers: error types and report writing.
