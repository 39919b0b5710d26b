"""Entropic associative memory: relation registers, quantizer, experiments."""

