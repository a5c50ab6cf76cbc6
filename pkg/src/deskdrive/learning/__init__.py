from .agent import StudentAgent
from .data import Collection, Dataset, SampleRecord, collect_episode, goal_and_command
from .model import ARMS, PolicyConfig, detection_block, init_policy, perceive, policy_forward
from .train import (FeatureCache, RoundReport, TrainConfig, dagger_round, evaluate, expert_collect,
                    mix_half_and_half, prepare, student_collect, train_offline, waypoint_loss)
