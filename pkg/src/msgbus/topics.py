"""
Topic patterns and the subscription table.

A pattern is an exact topic, a prefix wildcard ``a/b/*`` (every topic starting
with ``a/b/``) or ``*`` (everything). Topics under ``$bus/`` are reserved for
control frames.
"""
import threading
from typing import Dict, Hashable, List

CONTROL_PREFIX = '$bus/'
SUBSCRIBE = '$bus/subscribe'
UNSUBSCRIBE = '$bus/unsubscribe'

TOPICS = (
    'sensors/lidar', 'sensors/enose', 'sensors/mic', 'sensors/gascam', 'sensors/uv', 'sensors/detections',
    'nav/pose', 'nav/path', 'nav/cmd', 'nav/map',
    'analytics/doa', 'analytics/anomaly', 'analytics/leak', 'analytics/oil', 'analytics/signature',
    'analytics/mapdiff', 'analytics/channel',
    'mission/cmd', 'mission/status', 'mission/report',
    'sim/clock',
)


def validate_pattern(pattern: str) -> str:
    if not pattern:
        raise ValueError('empty topic pattern')
    if '*' in pattern and not (pattern == '*' or (pattern.endswith('/*') and pattern.count('*') == 1)):
        raise ValueError(f'invalid pattern {pattern!r}: only "*" or a trailing "/*" wildcard is allowed')
    return pattern


def topic_matches(pattern: str, topic: str) -> bool:
    if pattern == '*':
        return True
    if pattern.endswith('/*'):
        return topic.startswith(pattern[:-1])
    return pattern == topic


class TopicTable:
    """pattern -> subscribers, in subscription order."""

    def __init__(self):
        self.patterns: Dict[str, List[Hashable]] = {}
        self.lock = threading.Lock()

    def subscribe(self, pattern: str, subscriber: Hashable) -> None:
        validate_pattern(pattern)
        with self.lock:
            subs = self.patterns.setdefault(pattern, [])
            if subscriber not in subs:
                subs.append(subscriber)

    def unsubscribe(self, pattern: str, subscriber: Hashable) -> None:
        with self.lock:
            subs = self.patterns.get(pattern, [])
            if subscriber in subs:
                subs.remove(subscriber)
            if not subs:
                self.patterns.pop(pattern, None)

    def remove(self, subscriber: Hashable) -> None:
        with self.lock:
            for pattern in list(self.patterns):
                subs = self.patterns[pattern]
                if subscriber in subs:
                    subs.remove(subscriber)
                if not subs:
                    del self.patterns[pattern]

    def match(self, topic: str) -> List[Hashable]:
        """Distinct subscribers of ``topic``; a subscriber matching several patterns appears once."""
        seen = []
        with self.lock:
            for pattern, subs in self.patterns.items():
                if topic_matches(pattern, topic):
                    for s in subs:
                        if s not in seen:
                            seen.append(s)
        return seen
