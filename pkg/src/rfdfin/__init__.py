"""Two-stream detector for GAN-generated fingerprint images.

Ridge stream: grayscale variation along traced skeleton ridges, turned
into a 1D spectral feature. Artifact stream: a shallow CNN over the FFT
log-magnitude spectrum. Sum fusion and a small MLP give the real/fake
prediction. The antiforensic module provides the spectrum-correction
attacks used to probe robustness.
"""

__version__ = "0.1.0"
