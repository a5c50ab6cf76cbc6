from .episode import Agent, EpisodeResult, Step, TraceRecord, read_trace, run_episode, simulate, write_trace
from .expert import Expert, ExpertConfig, Rig, expert_plan, expert_policy
from .geometry import Polyline, build_path, to_ego
from .infractions import EVENT_KINDS, TERMINAL_KINDS, InfractionEvent, detect_infractions
from .render import Camera, decode_image, encode_image, render_front_view
from .scenarios import SCENARIO_KINDS, ScenarioSpec, make_scenario, suite
from .world import (ACTOR_KINDS, COMMANDS, Actor, Ego, Lane, Route, SimConfig, WorldState, completed,
                    on_road, step_world)
