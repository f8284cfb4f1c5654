"""Light-weight parallel local-global vision transformer."""
