"""Numeric defaults of the method and its evaluation protocol."""

# Network
DEFAULT_BLOCKS = 5
DEFAULT_FEAT_CHANNELS = 64
DEFAULT_SCALE = 4
DEFAULT_FRAMES = 5
DEFAULT_DROPOUT = 0.3
PRELU_INIT = 0.25
SUPPORTED_SCALES = (2, 3, 4)

# Optimisation
DEFAULT_LR = 1e-4
DECAY_FACTOR = 10.0
PLATEAU_PATIENCE = 5
PLATEAU_THRESHOLD = 1e-4
CHARBONNIER_EPS = 1e-3
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
DEFAULT_BATCH_SIZE = 16
DEFAULT_EPOCHS = 200

# Degradation and cropping
GAUSSIAN_SIGMA = 2.0
PATCH_SIZE = 144
SPATIAL_STRIDE = 32
TEMPORAL_STRIDE = 10
AUGMENTATIONS = ('identity', 'rot90', 'hflip', 'vflip')

# Resampling
CUBIC_A = -0.5

# SSIM
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

# BT.601 luma weights
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

# Inference
TILE_SIZE = 64
TILE_OVERLAP = 8
