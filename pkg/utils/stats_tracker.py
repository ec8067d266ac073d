# Thread-safe store of per-slab solver statistics shared by all refinement levels
import threading


class SharedStatsTracker:
    _instance = None
    _lock = threading.Lock()

    def __init__(self, max_records: int = 10000):
        self._latest_stats = {}
        self._raw_stats = []
        self._max_records = max_records
        self._data_lock = threading.Lock()

    @classmethod
    def get_instance(cls):
        with cls._lock:
            if cls._instance is None:
                cls._instance = SharedStatsTracker()
            return cls._instance

    def update_stats(self, stats):
        with self._data_lock:
            level = stats.get("level")
            self._latest_stats[level] = dict(stats)
            self._raw_stats.append(dict(stats))
            if len(self._raw_stats) > self._max_records:
                self._raw_stats.pop(0)

    def get_latest(self, level=None):
        with self._data_lock:
            return dict(self._latest_stats.get(level, {}))

    def get_raw(self, level=None):
        with self._data_lock:
            if level is None:
                return [dict(s) for s in self._raw_stats]
            return [dict(s) for s in self._raw_stats if s.get("level") == level]

    def reset(self):
        with self._data_lock:
            self._latest_stats = {}
            self._raw_stats = []
