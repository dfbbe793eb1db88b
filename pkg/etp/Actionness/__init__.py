from .grouping import conn_component, smooth_track, gaussian_kernel
from .proposal import ScoreTrack, ActionnessConfig, generate_proposals
