from pathlib import Path
from typing import Any, Dict, Optional

FLAG_PREFIX = 'flag.'


class RunManifest:
    """Class đại diện cho một lần chạy CLI, ghi cạnh mỗi file output"""
    def __init__(self, command: str, flags: Dict[str, Any] = None, seed: int = 0,
                 git_describe: str = 'unknown', wall_time: float = 0.0):
        self.command = command
        self.flags = flags or {}
        self.seed = seed
        self.git_describe = git_describe
        self.wall_time = wall_time

    def to_dict(self) -> Dict:
        out = {
            'command': self.command,
            'seed': self.seed,
            'git_describe': self.git_describe,
            'wall_time': f"{self.wall_time:.3f}",
        }
        for key in sorted(self.flags):
            out[f"{FLAG_PREFIX}{key}"] = self.flags[key]
        return out

    @classmethod
    def from_dict(cls, data: Dict) -> 'RunManifest':
        manifest = cls(
            command=data['command'],
            flags={k[len(FLAG_PREFIX):]: v for k, v in data.items() if k.startswith(FLAG_PREFIX)},
            seed=int(data.get('seed', 0)),
            git_describe=data.get('git_describe', 'unknown'),
            wall_time=float(data.get('wall_time', 0.0)),
        )
        return manifest

    def to_text(self) -> str:
        return "".join(f"{k}={_format_value(v)}\n" for k, v in self.to_dict().items())

    def write(self, output_path) -> Path:
        """Ghi `<output>.manifest` cạnh file output"""
        path = Path(f"{output_path}.manifest")
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(self.to_text())
        return path

    @classmethod
    def read(cls, path) -> 'RunManifest':
        data = {}
        with open(path, 'r', encoding='utf-8') as f:
            for line in f:
                line = line.rstrip('\n')
                if '=' in line:
                    key, value = line.split('=', 1)
                    data[key] = value
        return cls.from_dict(data)


def _format_value(value: Optional[Any]) -> str:
    if value is None:
        return ''
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    return str(value)
