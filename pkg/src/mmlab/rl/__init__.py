from .mlp import Adam, Mlp, load_checkpoint, save_checkpoint
from .replay import ReplayBuffer
