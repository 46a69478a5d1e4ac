"""Deterministic token counting.

The counter is a provider-independent approximation: text is segmented
into word and punctuation pieces, and long words are charged one token
per 4 characters (rounded up), mirroring the usual byte-pair "roughly
four characters per token" rule. It is the canonical counter used to
enforce the 4096-token per-call budget; when a remote provider reports
authoritative usage, that figure wins in telemetry but this estimate
still gates the budget.

Guarantees (tested):
  * count_tokens("") == 0
  * count_tokens(a + b) >= max(count_tokens(a), count_tokens(b))
  * count_tokens(a + b) <= count_tokens(a) + count_tokens(b) + 1
"""

from __future__ import annotations

import re
from typing import Iterable

_PIECE_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)

# Characters per token piece for alphanumeric runs.
_CHARS_PER_TOKEN = 4

# Fixed per-message envelope charge (role + separators), matching the
# shape of chat-completion message framing.
MESSAGE_OVERHEAD_TOKENS = 4
REPLY_PRIMING_TOKENS = 2


def _piece_cost(piece: str) -> int:
    return -(-len(piece) // _CHARS_PER_TOKEN)  # ceil division


def count_tokens(text: str) -> int:
    """Count tokens in ``text`` under the canonical segmentation."""
    return sum(_piece_cost(p) for p in _PIECE_RE.findall(text))


def count_message_tokens(texts: Iterable[str]) -> int:
    """Token charge for an ordered list of chat message texts.

    Each message pays a fixed envelope overhead on top of its content,
    plus a constant priming charge for the reply.
    """
    total = REPLY_PRIMING_TOKENS
    for text in texts:
        total += MESSAGE_OVERHEAD_TOKENS + count_tokens(text)
    return total


def truncate_to_tokens(text: str, budget: int) -> str:
    """Longest prefix of ``text`` ending on a piece boundary with
    count_tokens(prefix) <= budget."""
    if budget <= 0:
        return ""
    spent = 0
    cut = 0
    for match in _PIECE_RE.finditer(text):
        cost = _piece_cost(match.group(0))
        if spent + cost > budget:
            break
        spent += cost
        cut = match.end()
    return text[:cut]
