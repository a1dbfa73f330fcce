from .config import AttackConfig, AttackResult
from .edits import CharEditor, EditOp, WordEditor, edit_distance, editor_for
from .evasion import blackbox_search_attack, pgd_cost_attack, random_noise_attack
from .poison import poison_dataset, poison_model
from .surrogate import surrogate_loss
from .text import text_attack

__all__ = [
    "AttackConfig", "AttackResult", "CharEditor", "EditOp", "WordEditor", "blackbox_search_attack",
    "edit_distance", "editor_for", "pgd_cost_attack", "poison_dataset", "poison_model", "random_noise_attack",
    "surrogate_loss", "text_attack",
]
