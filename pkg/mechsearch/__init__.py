from .agent import FixedThresholdPolicy, FlatPolicy, ScriptedPolicy, ThresholdPolicy, run_episode
from .config import RunConfig, config_hash, load_config
from .decision import Thresholds, decide, decide_flat
from .dynamics import GraspTarget, MoveView, RemoveOccluder, execute
from .env import MechanicalSearchEnv
from .evaluation import compute_metrics, replay_episode, run_ablation_suite, run_batch
from .generation import generate_scene
from .grasp_oracle import score_scene
from .nbv import plan_nbv
from .perception import build_observation, build_odm, build_target_mask
from .policy import act, load_checkpoint, save_checkpoint
from .ppo import compute_gae, ppo_update, reward, train
from .render import render
from .tsdf import tsdf_integrate
