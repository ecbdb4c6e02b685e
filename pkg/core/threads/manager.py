import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime
from typing import Any, Callable, Dict, List, Optional, Sequence

import psutil

from .. import log_maker
from ..model import RandomSource

log = log_maker.logger("replication")


class ChunkState:
    """批次状态"""
    CREATED = "created"     # 已登记
    RUNNING = "running"     # 运行中
    COMPLETED = "completed" # 已完成
    ERROR = "error"         # 出错


class ChunkInfo:
    """批次信息"""
    def __init__(self, id: str, name: str, index: int, runs: int, rng: RandomSource,
                 created_time: datetime):
        self.id = id
        self.name = name
        self.index = index
        self.runs = runs
        self.rng = rng
        self.state = ChunkState.CREATED
        self.created_time = created_time
        self.start_time: Optional[datetime] = None
        self.end_time: Optional[datetime] = None
        self.error: Optional[BaseException] = None
        self.result: Any = None


def default_workers() -> int:
    return psutil.cpu_count(logical=False) or 1


class ReplicationManager:
    """
    把 Monte Carlo 重复实验切成固定大小的批次并行执行

    每个批次拥有独立的随机流 (seed, 批次号, ...)；结果按批次顺序返回，
    因此聚合结果与调度顺序无关。
    """

    def __init__(self, max_workers: int = 0, chunk_size: int = 2000):
        if chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")
        self.max_workers = max_workers or default_workers()
        self.chunk_size = chunk_size
        self.chunks: Dict[str, ChunkInfo] = {}
        self._lock = threading.RLock()
        self._active_count = 0
        self.state_listeners: List[Callable[[str, str, str], None]] = []

    def split(self, runs: int) -> List[int]:
        """把 runs 次重复切分为若干批次"""
        if runs < 0:
            raise ValueError("runs must be >= 0")
        sizes = [self.chunk_size] * (runs // self.chunk_size)
        if runs % self.chunk_size:
            sizes.append(runs % self.chunk_size)
        return sizes

    def create(self, name: str, runs: int, seed: int, stream: Sequence[int] = ()) -> List[str]:
        """登记一组批次，返回批次 id（按批次顺序）"""
        base = RandomSource(seed, tuple(stream))
        ids = []
        with self._lock:
            for index, size in enumerate(self.split(runs)):
                chunk_id = str(uuid.uuid4())
                self.chunks[chunk_id] = ChunkInfo(chunk_id, name, index, size, base.child(index), datetime.now())
                ids.append(chunk_id)
        return ids

    def _set_state(self, info: ChunkInfo, state: str):
        with self._lock:
            old_state = info.state
            info.state = state
            if state == ChunkState.RUNNING:
                info.start_time = datetime.now()
                self._active_count += 1
            elif old_state == ChunkState.RUNNING:
                info.end_time = datetime.now()
                self._active_count -= 1
        for listener in list(self.state_listeners):
            listener(info.id, old_state, state)

    def _run_chunk(self, info: ChunkInfo, task: Callable[[RandomSource, int, int], Any]):
        self._set_state(info, ChunkState.RUNNING)
        try:
            info.result = task(info.rng, info.runs, info.index)
        except BaseException as e:
            info.error = e
            self._set_state(info, ChunkState.ERROR)
            log.error(f"批次 {info.name}#{info.index} 出错: {e}")
            return
        self._set_state(info, ChunkState.COMPLETED)

    def run(self, chunk_ids: Sequence[str], task: Callable[[RandomSource, int, int], Any]) -> List[Any]:
        """执行批次；任一批次出错时，在全部结束后按批次顺序抛出第一个错误"""
        infos = [self.chunks[cid] for cid in chunk_ids]
        if len(infos) <= 1 or self.max_workers == 1:
            for info in infos:
                self._run_chunk(info, task)
        else:
            with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
                for future in [pool.submit(self._run_chunk, info, task) for info in infos]:
                    future.result()
        for info in infos:
            if info.error is not None:
                raise info.error
        return [info.result for info in infos]

    def map(self, name: str, runs: int, seed: int, task: Callable[[RandomSource, int, int], Any],
            stream: Sequence[int] = ()) -> List[Any]:
        """create + run；task(rng, 批次内次数, 批次号)"""
        ids = self.create(name, runs, seed, stream)
        log.debug(f"{name}: {runs} 次重复，{len(ids)} 个批次，{self.max_workers} 个线程")
        try:
            return self.run(ids, task)
        finally:
            self.destroy(ids)

    def destroy(self, chunk_ids: Sequence[str]) -> None:
        with self._lock:
            for cid in chunk_ids:
                self.chunks.pop(cid, None)

    def get_chunk_info(self, chunk_id: str) -> Optional[ChunkInfo]:
        with self._lock:
            return self.chunks.get(chunk_id)

    def get_chunks_by_state(self, state: str) -> List[ChunkInfo]:
        with self._lock:
            return [info for info in self.chunks.values() if info.state == state]

    def get_active_count(self) -> int:
        with self._lock:
            return self._active_count

    def get_total_count(self) -> int:
        with self._lock:
            return len(self.chunks)
