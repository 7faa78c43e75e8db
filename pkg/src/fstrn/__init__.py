"""Fast spatio-temporal residual network for video super-resolution.

This package provides a numpy implementation of the network with exact
reverse-mode gradients, its training loop, the degradation and cropping
pipeline, PSNR/SSIM evaluation and the parameter/FLOP and bound analyses.
"""

__version__ = '0.1.0'
