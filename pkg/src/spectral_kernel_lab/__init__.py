"""Spectral kernel design on Hecke trees and the hyperbolic plane."""
