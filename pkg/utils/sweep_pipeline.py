import logging
import os
import queue
import threading
import time
import traceback
from dataclasses import dataclass
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, Optional

from models.exceptions import DomainError, FNLSError
from models.schemas import RunConfig
from utils.artifact_store import write_json
from utils.run_config import describe_error, expand_sweep


class ProcessingStatus(Enum):
    PENDING = "pending"
    PROCESSING = "processing"
    COMPLETED = "completed"
    FAILED = "failed"


@dataclass
class SweepTask:
    run_id: str
    command: str
    overrides: Dict[str, Any]
    config: RunConfig
    directory: Path
    status: ProcessingStatus = ProcessingStatus.PENDING
    started_at: Optional[datetime] = None
    completed_at: Optional[datetime] = None
    error_message: Optional[str] = None
    result: Optional[Dict] = None
    processing_time: Optional[float] = None


@dataclass
class SweepMetrics:
    total_tasks: int = 0
    completed_tasks: int = 0
    failed_tasks: int = 0
    average_processing_time: float = 0.0
    active_workers: int = 0


class SweepPipeline:
    """Worker pool that runs every point of a parameter sweep in its own directory"""

    def __init__(self):
        self.task_handlers: Dict[str, Callable[[RunConfig, Path], Dict]] = {}
        self.tasks: Dict[str, SweepTask] = {}
        self.metrics = SweepMetrics()
        self._lock = threading.Lock()
        self.logger = logging.getLogger('SweepPipeline')

    def register_handler(self, command: str, handler: Callable[[RunConfig, Path], Dict]):
        """Register the runner for one command; it returns a result dict with `success`"""
        self.task_handlers[command] = handler
        self.logger.debug(f"Registered handler for command: {command}")

    @staticmethod
    def default_workers() -> int:
        return max(1, int(os.getenv("FNLS_THREADS", "1")))

    def run_sweep(self, config: RunConfig, output_dir, max_workers: Optional[int] = None) -> Dict:
        """Run the sweep and write index.json after merging results in run-id order"""
        command = config.sweep["command"]
        handler = self.task_handlers.get(command)
        if handler is None:
            raise DomainError(f"No handler registered for command: {command}")
        output_dir = Path(output_dir)
        max_workers = max_workers or self.default_workers()

        self.tasks = {}
        self.metrics = SweepMetrics()
        pending: "queue.Queue[str]" = queue.Queue()
        for run_id, overrides, run_config in expand_sweep(config):
            self.tasks[run_id] = SweepTask(run_id=run_id, command=command, overrides=overrides,
                                           config=run_config, directory=output_dir / run_id)
            pending.put(run_id)
        self.metrics.total_tasks = len(self.tasks)
        self.logger.info(f"Sweep of {len(self.tasks)} {command} runs on {max_workers} workers")

        workers = []
        for worker_id in range(min(max_workers, len(self.tasks))):
            worker = threading.Thread(target=self._worker_loop, args=(worker_id, pending, handler),
                                      daemon=True)
            worker.start()
            workers.append(worker)
        for worker in workers:
            worker.join()

        index = self._merge(config, command)
        write_json(index, output_dir / "index.json")
        self.logger.info(f"Sweep finished: {self.metrics.completed_tasks} completed, "
                         f"{self.metrics.failed_tasks} failed")
        return {"success": self.metrics.failed_tasks == 0, "command": "sweep", "index": index,
                "directory": str(output_dir)}

    def _worker_loop(self, worker_id: int, pending: "queue.Queue[str]", handler: Callable):
        self.logger.debug(f"Worker {worker_id} started")
        while True:
            try:
                run_id = pending.get_nowait()
            except queue.Empty:
                break
            self._process_task(self.tasks[run_id], worker_id, handler)
        self.logger.debug(f"Worker {worker_id} stopped")

    def _process_task(self, task: SweepTask, worker_id: int, handler: Callable):
        task.status = ProcessingStatus.PROCESSING
        task.started_at = datetime.now()
        with self._lock:
            self.metrics.active_workers += 1
        self.logger.info(f"Worker {worker_id} processing {task.run_id} {task.overrides}")

        start_time = time.time()
        try:
            task.directory.mkdir(parents=True, exist_ok=True)
            result = handler(task.config, task.directory)
            task.result = result
            if result.get("success", False):
                task.status = ProcessingStatus.COMPLETED
            else:
                task.status = ProcessingStatus.FAILED
                task.error_message = result.get("error", "run reported failure")
        except FNLSError as e:
            task.status = ProcessingStatus.FAILED
            task.error_message = "; ".join(describe_error(e))
            self.logger.error(f"{task.run_id} failed: {task.error_message}")
        except Exception as e:
            task.status = ProcessingStatus.FAILED
            task.error_message = str(e)
            self.logger.error(f"{task.run_id} crashed: {e}\n{traceback.format_exc()}")
        task.processing_time = time.time() - start_time
        task.completed_at = datetime.now()

        with self._lock:
            self.metrics.active_workers -= 1
            if task.status == ProcessingStatus.COMPLETED:
                self.metrics.completed_tasks += 1
                done = self.metrics.completed_tasks
                self.metrics.average_processing_time += (
                    task.processing_time - self.metrics.average_processing_time) / done
            else:
                self.metrics.failed_tasks += 1

    def _merge(self, config: RunConfig, command: str) -> Dict:
        """Index of the sweep; `runs` lists exactly the completed runs"""
        completed, failed = [], []
        for run_id in sorted(self.tasks):
            task = self.tasks[run_id]
            entry = {"run_id": run_id, "directory": run_id, "overrides": task.overrides}
            if task.status == ProcessingStatus.COMPLETED:
                if task.result and "overall_passed" in task.result:
                    entry["overall_passed"] = task.result["overall_passed"]
                completed.append(entry)
            else:
                failed.append({**entry, "error": task.error_message})
        return {"command": command, "parameters": config.sweep["parameters"],
                "runs": completed, "failed": failed}

    def get_status(self) -> Dict:
        return {
            "tasks": {run_id: task.status.value for run_id, task in sorted(self.tasks.items())},
            "metrics": {
                "total_tasks": self.metrics.total_tasks,
                "completed_tasks": self.metrics.completed_tasks,
                "failed_tasks": self.metrics.failed_tasks,
                "average_processing_time": self.metrics.average_processing_time,
            },
        }


sweep_pipeline = SweepPipeline()
