"""Mini-Karel program synthesis domain."""

from .lang import Program, ParseError, ProgramConfig, parse, pretty_print, to_tokens, tokenize, TOKENS
from .world import GridConfig, GridState, ExecOutcome, execute
from .tasks import (
    ExecutionFilter, IOSpec, Task, TaskGenConfig, featurize, generate_tasks, read_tasks, spec_filter,
    top1_generalization, write_tasks,
)
