"""Help strings shown by the command line."""

app_help = """
FSTRN video super-resolution.

Typical pipeline:
  1. fstrn prepare clip.y4m --out data/        degrade + crop training volumes
  2. fstrn train data/ --out run/              Charbonnier/Adam training
  3. fstrn infer run/model.fstrn lr.y4m -o sr.y4m
  4. fstrn eval sr.y4m hr.y4m --out scores/    PSNR / SSIM on luminance
  5. fstrn analyze params --channels 64        parameter / MAC census
     fstrn analyze bound run/model.fstrn       covering and generalization bounds
  6. fstrn gradcheck                           finite-difference gradient suite

Environment:
  FSTRN_THREADS    worker threads used inside a single convolution (default 1)
  FSTRN_LOG_LEVEL  logging level (default INFO)
"""

config_help = (
    'JSON file with optional sections "model", "train", "data" and "inference". '
    'Command-line flags override values from the file.'
)

format_help = 'Video format: auto, y4m, yuv (raw 4:2:0, needs --width/--height) or png (directory of numbered PNGs).'
