"""Numerical core: autodiff, toy language model, hypernetwork and reward."""
