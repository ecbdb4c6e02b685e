from .manager import ChunkInfo, ChunkState, ReplicationManager, default_workers
