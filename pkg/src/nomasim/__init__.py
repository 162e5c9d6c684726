"""Uplink NoMA link-level and grant-free simulation.

Modules: ``fec`` (convolutional code, BCJR, CRC), ``sigpool`` (spreading
sequences, sparse patterns, SCMA codebooks), ``txchain`` (transmit chain),
``channel`` (fading and superposition), ``muxrx`` (detectors and outer-loop
receivers), ``grantfree`` (contention simulation) and ``cli``.
"""
__version__ = "0.1.0"
