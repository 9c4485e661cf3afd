"""Prompt templates.

Every prompt opens with a ``### TASK: <name>`` line followed by ``Key: value`` header
lines; free text follows a blank line. Live models read the instructions, the stub
backend reads the headers.
"""
from __future__ import annotations

import re

APPROVED = "APPROVED"

EVALUATION_INSTRUCTION = (
    "Evaluate the analysis of the knowledge concept for factual accuracy, for clear "
    "distinction from easily confused concepts, and for explicit prerequisite and "
    "similarity relations. Reply with the single word APPROVED if it needs no change; "
    "otherwise reply with a concise critique."
)

EXTRACTION_FORMAT = (
    "Output one item per line, nothing else:\n"
    "(entity|NAME) for every known concept mentioned\n"
    "(prereq|A|B) when A must be learned before B\n"
    "(similar|A|B|W) when A and B are easily confused, W in (0,1] is the strength"
)

_HEADER = re.compile(r"^([A-Za-z][A-Za-z ]*):\s?(.*)$")


def _render(task: str, headers: dict[str, object], body: str = "") -> str:
    lines = [f"### TASK: {task}"]
    lines += [f"{k}: {v}" for k, v in headers.items()]
    return "\n".join(lines) + "\n\n" + body


def parse_prompt(prompt: str) -> tuple[str, dict[str, str], str]:
    head, _, body = prompt.partition("\n\n")
    lines = head.splitlines()
    if not lines or not lines[0].startswith("### TASK:"):
        return "", {}, prompt
    task = lines[0].split(":", 1)[1].strip()
    headers = {}
    for line in lines[1:]:
        m = _HEADER.match(line)
        if m:
            headers[m.group(1)] = m.group(2)
    return task, headers, body


def explain_prompt(kc_name: str) -> str:
    return _render(
        "explain",
        {"Concept": kc_name},
        "You are an expert teacher. Write an accurate explanation of the knowledge concept "
        f"'{kc_name}': its meaning, the concepts a learner must know first, the concepts that "
        "build on it, and the concepts it is easily confused with.",
    )


def evaluate_prompt(kc_name: str, analysis: str, iteration: int) -> str:
    return _render(
        "evaluate",
        {"Concept": kc_name, "Iteration": iteration},
        f"Question: explain the knowledge concept '{kc_name}'.\n"
        f"Analysis:\n{analysis}\n\nEvaluation instruction: {EVALUATION_INSTRUCTION}",
    )


def refine_prompt(kc_name: str, analysis: str, critique: str, iteration: int) -> str:
    return _render(
        "refine",
        {"Concept": kc_name, "Iteration": iteration},
        f"Current analysis:\n{analysis}\n\nCritique:\n{critique}\n\n"
        "Rewrite the analysis so that it addresses every point of the critique.",
    )


def extract_prompt(chunk: str, kc_names: list[str], chunk_index: int) -> str:
    names = "; ".join(kc_names)
    return _render(
        "extract",
        {"Chunk": chunk_index},
        f"Known concepts: {names}\n\n{EXTRACTION_FORMAT}\n\nText:\n{chunk}",
    )


def summarize_prompt(community_id: int, members: list[str], relations: list[str]) -> str:
    return _render(
        "summarize",
        {"Community": community_id, "Members": " ; ".join(members)},
        "Summarize what this group of knowledge concepts covers and how they relate.\n"
        + "\n".join(relations),
    )


def explain_step_prompt(
    step: int, kc_name: str, parents: list[str], children: list[str], similar: list[str], summary: str
) -> str:
    return _render(
        "explain_step",
        {"Step": step, "Concept": kc_name},
        f"Explain why '{kc_name}' is recommended at step {step} of a learning path.\n"
        f"Prerequisites already on the path: {', '.join(parents) or 'none'}\n"
        f"Concepts on the path that build on it: {', '.join(children) or 'none'}\n"
        f"Easily confused concepts: {', '.join(similar) or 'none'}\n"
        f"Community summary: {summary or 'none'}",
    )
