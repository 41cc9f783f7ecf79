"""Lifelong model editing with hypernetworks trained on edit-stream returns."""
