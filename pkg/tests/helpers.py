"""Small builders shared across the test modules."""

from proverloop.corpus import (
    PROVED_MARKER,
    Premise,
    PremiseFile,
    Theorem,
    TracedTactic,
    corpus_from_files,
)

URL = "fixture://repos/unit"
COMMIT = "deadbee"


def premise(name, path="lib/a.lean", statement=None, start=(1, 1), end=(1, 20),
            kind="definition"):
    return Premise(
        full_name=name, file_path=path,
        statement=statement if statement is not None else f"Holds {name}",
        start=start, end=end, kind=kind,
    )


def pfile(path, names=(), imports=(), premises=None):
    """File whose premises sit on consecutive non-overlapping line ranges."""
    if premises is None:
        premises = tuple(
            premise(n, path=path, start=(3 * i + 1, 1), end=(3 * i + 2, 1))
            for i, n in enumerate(names)
        )
    return PremiseFile(path=path, imports=tuple(imports), premises=tuple(premises))


def tactic(ref=None, state_before="⊢ goal", state_after=PROVED_MARKER):
    if ref is None:
        return TracedTactic(
            tactic="rfl", annotated_tactic="rfl", referenced_premises=(),
            state_before=state_before, state_after=state_after,
        )
    return TracedTactic(
        tactic=f"apply {ref}",
        annotated_tactic=f"apply <a>{ref}</a>",
        referenced_premises=(ref,),
        state_before=state_before,
        state_after=state_after,
    )


def theorem(name, path="lib/a.lean", statement=None, tactics=(), status="proven",
            start=(50, 1), end=(60, 1), url=URL, commit=COMMIT, proof=None):
    return Theorem(
        url=url, commit=commit, file_path=path, full_name=name,
        statement=statement if statement is not None else f"GoalOf {name}",
        start=start, end=end, traced_tactics=tuple(tactics),
        status=status, proof=proof,
    )


def corpus_of(*files):
    return corpus_from_files(list(files))
