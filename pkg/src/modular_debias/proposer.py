"""Pair proposer clients: an HTTP endpoint and an offline lexicon stub."""

import json
import logging
import os
import urllib.error
import urllib.request
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any, Protocol

from .exceptions import ProposerError

logger = logging.getLogger(__name__)

PROPOSER_URL_ENV = "MAFIA_PROPOSER_URL"
DEFAULT_TIMEOUT = 30.0


class PairProposer(Protocol):
    """Something that suggests a counterpart for a bias term."""

    def propose(
        self,
        bias_type: str,
        seed_pairs: Sequence[tuple[str, str]],
        term: str,
    ) -> str | list[str] | None:
        """Return a counterpart (or several), or None to refuse.

        Raises:
            ProposerError: If the proposer cannot be reached

        """
        ...


@dataclass
class StubProposer:
    """Offline proposer answering from a fixed lexicon (case-insensitive)."""

    lexicon: Mapping[str, str] = field(default_factory=dict)
    _folded: dict[str, str] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        """Index the lexicon by folded term."""
        self._folded = {k.casefold(): v for k, v in self.lexicon.items()}

    def propose(
        self,
        bias_type: str,  # noqa: ARG002
        seed_pairs: Sequence[tuple[str, str]],
        term: str,
    ) -> str | None:
        """Look the term up in the lexicon, then in the seed pairs."""
        folded = term.casefold()
        if folded in self._folded:
            return self._folded[folded]
        for dominant, minority in seed_pairs:
            if dominant.casefold() == folded:
                return minority
            if minority.casefold() == folded:
                return dominant
        return None


@dataclass
class HttpProposer:
    """Client for a proposer endpoint speaking the JSON pair protocol.

    Request: ``{"bias_type": ..., "seed_pairs": [[d, m], ...], "term": ...}``.
    Response: ``{"counterpart": string | list of strings | null}``.
    """

    url: str
    timeout: float = DEFAULT_TIMEOUT

    def __post_init__(self) -> None:
        """Validate the endpoint URL."""
        if not self.url.startswith(("http://", "https://")):
            msg = f"Proposer URL must use http or https scheme, got {self.url!r}"
            raise ProposerError(msg)

    def _make_request(self, data: dict[str, object]) -> Any:  # noqa: ANN401
        """POST a JSON payload and parse the JSON answer.

        Raises:
            ProposerError: If the request fails or the answer is not JSON

        """
        headers = {"Content-Type": "application/json", "Accept": "application/json"}
        request = urllib.request.Request(  # noqa: S310
            self.url,
            data=json.dumps(data).encode("utf-8"),
            method="POST",
            headers=headers,
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as response:  # noqa: S310
                return json.loads(response.read().decode("utf-8"))
        except urllib.error.HTTPError as e:
            error_body = e.read().decode("utf-8", errors="replace")
            msg = f"Proposer request failed: {e.code} {e.reason} - {error_body}"
            raise ProposerError(msg, e.code) from e
        except (urllib.error.URLError, OSError) as e:
            msg = f"Proposer request failed: {e}"
            raise ProposerError(msg) from e
        except json.JSONDecodeError as e:
            msg = f"Proposer returned invalid JSON: {e}"
            raise ProposerError(msg) from e

    def propose(
        self,
        bias_type: str,
        seed_pairs: Sequence[tuple[str, str]],
        term: str,
    ) -> str | list[str] | None:
        """Ask the endpoint for a counterpart of term."""
        payload: dict[str, object] = {
            "bias_type": str(bias_type),
            "seed_pairs": [[d, m] for d, m in seed_pairs],
            "term": term,
        }
        answer = self._make_request(payload)
        if not isinstance(answer, dict) or "counterpart" not in answer:
            msg = f"Proposer answer lacks a counterpart field: {answer!r}"
            raise ProposerError(msg)
        counterpart = answer["counterpart"]
        if counterpart is None or isinstance(counterpart, str):
            return counterpart
        if isinstance(counterpart, list) and all(isinstance(c, str) for c in counterpart):
            return counterpart
        msg = f"Unexpected counterpart value: {counterpart!r}"
        raise ProposerError(msg)


def proposer_from_env(
    lexicon: Mapping[str, str] | None = None,
    env: Mapping[str, str] | None = None,
) -> PairProposer:
    """Select the HTTP proposer when MAFIA_PROPOSER_URL is set, else the stub."""
    environ = os.environ if env is None else env
    url = environ.get(PROPOSER_URL_ENV, "").strip()
    if url:
        logger.info("Using pair proposer at %s", url)
        return HttpProposer(url)
    logger.info("%s is unset, using the offline stub proposer", PROPOSER_URL_ENV)
    return StubProposer(dict(lexicon or {}))
