"""Thought generation for LLM prompting: task MDPs, PUCT search over a
self-play-trained policy/value network, thought extraction and rendering,
and critic-guided revision, plus an LLM-free evaluation harness.
"""

from . import envs, errors, harness, llm_client, mcts, net, revision, templates, thoughts, trainer
from .envs import Task, get_task
from .harness import EvalReport, RunConfig, evaluate, render_report
from .llm_client import ChatRequest, LlmClient, LlmConfig, LlmCritic, parse_critique
from .mcts import Episode, Evaluator, SearchConfig, act_sequence
from .net import PolicyValueNet
from .revision import Critique, OracleCritic, RevisionConfig, revise_loop
from .solver import XotSolver
from .thoughts import (ThoughtSet, ThoughtStep, ThoughtTrajectory, extract_multi,
                       extract_single, render_prompt, render_revision)
from .trainer import TrainPlan, plan_for, run_training

__version__ = "0.1.0"

__all__ = [
    "ChatRequest", "Critique", "Episode", "EvalReport", "Evaluator",
    "LlmClient", "LlmConfig", "LlmCritic", "OracleCritic", "PolicyValueNet",
    "RevisionConfig", "RunConfig", "SearchConfig", "Task", "ThoughtSet",
    "ThoughtStep", "ThoughtTrajectory", "TrainPlan", "XotSolver",
    "act_sequence", "envs", "errors", "evaluate", "extract_multi",
    "extract_single", "get_task", "harness", "llm_client", "mcts", "net",
    "parse_critique", "plan_for", "render_prompt", "render_report",
    "render_revision", "revise_loop", "revision", "run_training", "templates",
    "thoughts", "trainer", "__version__",
]
