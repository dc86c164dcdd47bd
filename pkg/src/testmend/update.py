"""The update agent: builds the update prompt and returns the raw model reply."""

from __future__ import annotations

import json
from typing import Optional

from .errors import PreconditionError
from .model import InstructionBundle, UpdateTask
from .preprocess import FilteredContext
from .reports import render_hunk


def instructions_section(bundle: InstructionBundle) -> str:
    doc = json.dumps(bundle.to_document(), indent=2, ensure_ascii=False)
    return ("\nThe previous attempt was executed and analysed. Apply these update instructions:\n"
            f"```json\n{doc}\n```\n")


def update_bindings(task: UpdateTask, context: FilteredContext,
                    instructions: Optional[InstructionBundle]) -> dict[str, str]:
    focal_before = ""
    if task.focal_changed:
        focal_before = f"\nFocal method before the change:\n```java\n{task.focal_before.source}\n```\n"
    return {
        "test_class_path": task.test_class_path,
        "test_before": task.test_before,
        "focal_after": task.focal_after.source,
        "focal_before_section": focal_before,
        "diff_hunks": "".join(render_hunk(h) for h in context.kept_hunks).rstrip("\n") or "(no changes)",
        "context_methods": "\n\n".join(context.kept_non_test_methods) or "// none",
        "context_variables": "\n".join(context.kept_variables) or "// none",
        "instructions": instructions_section(instructions) if instructions is not None else "",
    }


def generate_update(task: UpdateTask, context: FilteredContext, instructions: Optional[InstructionBundle],
                    iteration: int, gateway) -> str:
    if iteration < 1:
        raise PreconditionError("iteration must be >= 1")
    if (instructions is None) != (iteration == 1):
        raise PreconditionError("instructions are required from iteration 2 on and forbidden in iteration 1")
    return gateway.ask("test_update", **update_bindings(task, context, instructions))
