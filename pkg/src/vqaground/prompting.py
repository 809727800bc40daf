"""Prompt construction for the question+answer -> declarative caption step,
plus an offline rule-based converter usable when no language backend is up.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import EmptyField

_WH_WORDS = ("what", "which", "where", "who", "whose", "whom", "why", "how", "when")
_AUXILIARIES = (
    "is", "are", "was", "were", "do", "does", "did",
    "can", "could", "will", "would", "has", "have", "had", "should",
)
_ARTICLES = ("a", "an", "the")


@dataclass(frozen=True)
class PromptTemplate:
    """Labels and instruction rendered around the quoted question/answer."""

    question_label: str = "questions:"
    answer_label: str = "answer:"
    instruction: str = "convert to a declarative sentence:"


DEFAULT_TEMPLATE = PromptTemplate()


def _escape(text: str) -> str:
    # embedded double quotes are doubled so fields stay unambiguous
    return text.replace('"', '""')


def build_prompt(question: str, answer: str, template: PromptTemplate = DEFAULT_TEMPLATE) -> str:
    """Render the caption-generation prompt.

    The default template renders exactly:
        questions: "<question>" answer: "<answer>" convert to a declarative sentence:
    """
    question = question.strip()
    answer = answer.strip()
    if not question:
        raise EmptyField("question is empty")
    if not answer:
        raise EmptyField("answer is empty")
    return (
        f'{template.question_label} "{_escape(question)}" '
        f'{template.answer_label} "{_escape(answer)}" '
        f"{template.instruction}"
    )


def parse_default_prompt(prompt: str) -> tuple[str, str]:
    """Recover (question, answer) from a default-template rendering.

    Raises ValueError when the prompt does not match the default layout.
    """
    m = re.fullmatch(
        r'questions: "(?P<q>.*)" answer: "(?P<a>.*?)" convert to a declarative sentence:',
        prompt,
        flags=re.DOTALL,
    )
    if m is None:
        raise ValueError("prompt does not match the default template")
    return m.group("q").replace('""', '"'), m.group("a").replace('""', '"')


def _strip_article(text: str) -> str:
    words = text.split()
    if words and words[0] in _ARTICLES:
        words = words[1:]
    return " ".join(words)


def heuristic_declarative(question: str, answer: str) -> str:
    """Rule-based declarative conversion, a degraded stand-in for the LLM.

    Always returns non-empty lowercase text with no question mark and no
    trailing punctuation.
    """
    q = question.lower().replace("?", " ")
    q = " ".join(q.split()).rstrip("!. ").strip()
    a = answer.lower().replace("?", " ")
    a = " ".join(a.split()).rstrip("!. ").strip()
    if not a:
        a = "unknown"
    if not q:
        return a

    # "what color is the X?" + color answer -> "the <color> <X>"
    m = re.fullmatch(r"what colou?r is (?:the |a |an )?(?P<subj>.+)", q)
    if m:
        return f"the {_strip_article(a)} {m.group('subj')}".strip()

    # "what is (the) X?" -> "the <answer>" (dedup any article in the answer)
    if re.fullmatch(r"what is (?:the |a |an )?.+", q):
        return f"the {_strip_article(a)}"

    # yes/no question answered "yes" -> declarative word order
    words = q.split()
    if a == "yes" and len(words) >= 3 and words[0] in _AUXILIARIES:
        aux, subject, rest = words[0], words[1], words[2:]
        return " ".join([subject, aux, *rest])

    # fallback: "<answer>, <question minus leading wh-word>"
    if words[0] in _WH_WORDS:
        words = words[1:]
    stripped = " ".join(words)
    return f"{a}, {stripped}" if stripped else a
