"""Fixed English stop-word list.

Mining and position sampling treat membership in this list as the
definition of "stop word". The list is versioned and shipped with the
repo so that mined pair sets stay reproducible; do not edit it without
bumping STOPWORDS_VERSION and regenerating committed fixtures.
"""

STOPWORDS_VERSION = 1

_WORDS = """
a about above across after again against all almost along also although
am among an and any anything are around as at be because been before
behind being below beside between beyond both but by can could despite
did do does doing down during each either even ever every few for from
further had has have having he her hers herself him himself his how i
if in inside into is it its itself just less many may me might mine
more most must my myself near neither never no nor not nothing now of
off often on once one only onto or other our ours ourselves out over
own past perhaps quite rather same several shall she should since so
some something still such than that the their theirs them themselves
then there these they this those though through throughout to too
toward towards under unless until up upon us very was we were what when
where whether which while who whom whose why will with within without
would yet you your yours yourself yourselves 's 're 've 'll 'd 'm n't
""".split()

STOP_WORDS = frozenset(_WORDS)


def is_stop_word(token: str) -> bool:
    """Case-insensitive membership in the fixed stop-word list."""
    return token.lower() in STOP_WORDS
