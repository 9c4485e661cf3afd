"""Text-model backends: a deterministic planted-ontology stub and an HTTP client."""
from __future__ import annotations

import json
import logging
import os
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import requests

from ..errors import BackendError, ConfigError, MalformedResponseError
from . import prompts

log = logging.getLogger(__name__)


class TextModelBackend(Protocol):
    def complete(self, prompt: str) -> str: ...


# -- planted ontology --------------------------------------------------------


@dataclass(frozen=True)
class PlantedOntology:
    concepts: tuple[str, ...]
    true_prereqs: frozenset[tuple[str, str]]
    true_sims: dict[frozenset, float] = field(hash=False)
    approve_after: dict[str, int] = field(default_factory=dict, hash=False)

    @classmethod
    def from_dict(cls, data: dict) -> "PlantedOntology":
        concepts = tuple(c if isinstance(c, str) else c["name"] for c in data["concepts"])
        known = set(concepts)
        prereqs = frozenset((a, b) for a, b in data.get("true_prereqs", []))
        sims = {}
        for row in data.get("true_sims", []):
            a, b = row[0], row[1]
            sims[frozenset((a, b))] = float(row[2]) if len(row) > 2 else 0.5
        for a, b in prereqs:
            if a not in known or b not in known:
                raise ConfigError(f"prerequisite ({a}, {b}) names an unknown concept")
        for pair in sims:
            if not pair <= known or len(pair) != 2:
                raise ConfigError(f"similarity {sorted(pair)} is invalid")
        approve = {k: int(v) for k, v in data.get("approve_after", {}).items()}
        return cls(concepts, prereqs, sims, approve)

    def to_dict(self) -> dict:
        return {
            "concepts": list(self.concepts),
            "true_prereqs": [list(p) for p in sorted(self.true_prereqs)],
            "true_sims": [sorted(p) + [w] for p, w in sorted(self.true_sims.items(), key=lambda kv: sorted(kv[0]))],
            "approve_after": dict(sorted(self.approve_after.items())),
        }

    @classmethod
    def load(cls, path: str | Path) -> "PlantedOntology":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


_PREREQ_RE = re.compile(r"\[\[([^\[\]\n]+)\]\] is a prerequisite of \[\[([^\[\]\n]+)\]\]\.")
_SIM_RE = re.compile(r"\[\[([^\[\]\n]+)\]\] is easily confused with \[\[([^\[\]\n]+)\]\] \(similarity ([0-9.]+)\)\.")
_NAME_RE = re.compile(r"\[\[([^\[\]\n]+)\]\]")


class StubBackend:
    """Answers prompts from a planted ontology; a pure function of the prompt text.

    Explanations state every planted relation touching the concept as one sentence
    per line; extraction reads those sentences back out of the chunk it is given.
    The evaluator approves once the prompt's iteration reaches ``approve_after``.
    """

    def __init__(self, ontology: PlantedOntology):
        self.ontology = ontology
        self.calls = 0

    def _explanation(self, name: str, revision: int) -> str:
        ont = self.ontology
        lines = [f"Concept [[{name}]] (revision {revision})."]
        for a, b in sorted(ont.true_prereqs):
            if name in (a, b):
                lines.append(f"[[{a}]] is a prerequisite of [[{b}]].")
        for pair, w in sorted(ont.true_sims.items(), key=lambda kv: sorted(kv[0])):
            if name in pair:
                a, b = sorted(pair)
                lines.append(f"[[{a}]] is easily confused with [[{b}]] (similarity {w:g}).")
        return "\n".join(lines)

    def complete(self, prompt: str) -> str:
        self.calls += 1
        task, headers, body = prompts.parse_prompt(prompt)
        if task == "explain":
            return self._explanation(headers["Concept"], 1)
        if task == "refine":
            return self._explanation(headers["Concept"], int(headers["Iteration"]) + 1)
        if task == "evaluate":
            name, it = headers["Concept"], int(headers["Iteration"])
            if it >= self.ontology.approve_after.get(name, 1):
                return prompts.APPROVED
            return f"Revise: state more precisely how {name} differs from similar concepts."
        if task == "extract":
            text = body.split("Text:\n", 1)[-1]
            out = [f"(entity|{n})" for n in dict.fromkeys(_NAME_RE.findall(text))]
            out += [f"(prereq|{a}|{b})" for a, b in _PREREQ_RE.findall(text)]
            out += [f"(similar|{a}|{b}|{w})" for a, b, w in _SIM_RE.findall(text)]
            return "\n".join(out)
        if task == "summarize":
            members = headers.get("Members", "")
            return f"Community {headers.get('Community')}: covers {members}."
        if task == "explain_step":
            name = headers["Concept"]
            return f"Step {headers['Step']}: {name} is recommended next. " + body.splitlines()[-1]
        raise MalformedResponseError(f"stub backend cannot answer task {task!r}")


# -- live HTTP client --------------------------------------------------------


@dataclass(frozen=True)
class HttpBackendConfig:
    base_url: str
    model: str
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = 60.0
    retries: int = 3
    backoff: float = 1.0


class HttpBackend:
    """Chat-completions style client (``POST {base_url}/chat/completions``)."""

    def __init__(self, config: HttpBackendConfig, session: requests.Session | None = None):
        if config.retries < 1:
            raise ConfigError("retries must be >= 1")
        self.config = config
        self.session = session or requests.Session()

    def complete(self, prompt: str) -> str:
        cfg = self.config
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(cfg.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        payload = {"model": cfg.model, "messages": [{"role": "user", "content": prompt}], "temperature": 0}
        url = cfg.base_url.rstrip("/") + "/chat/completions"
        last = None
        for attempt in range(1, cfg.retries + 1):
            try:
                resp = self.session.post(url, json=payload, headers=headers, timeout=cfg.timeout)
                resp.raise_for_status()
                data = resp.json()
                break
            except (requests.RequestException, ValueError) as exc:
                last = exc
                log.warning("backend attempt %d/%d failed: %s", attempt, cfg.retries, exc)
                if attempt < cfg.retries:
                    time.sleep(cfg.backoff * attempt)
        else:
            raise BackendError(f"completion request to {url} failed: {last}", attempts=cfg.retries)
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedResponseError(f"unexpected response shape: {exc}") from exc
        return text or ""
