"""Day-ahead linear programme, simplex solver and demonstrator utilities."""
