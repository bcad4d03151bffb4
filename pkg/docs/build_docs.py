"""Regenerate the mkdocstrings stub pages under docs/attrnet, one page per module."""
from pathlib import Path

PROJECT_ROOT = Path(__file__).parent.parent
PACKAGE_ROOT = PROJECT_ROOT / "attrnet"
DOCS_ROOT = Path(__file__).parent


def module_name(path: Path) -> str:
    """`attrnet/metrics/ranking.py` -> `attrnet.metrics.ranking`."""
    return ".".join(path.relative_to(PROJECT_ROOT).with_suffix("").parts)


def public_modules(folder: Path) -> list[Path]:
    # dunder files (__init__, __main__) get no page
    return sorted(path for path in folder.glob("*.py") if "__" not in path.name)


def main() -> None:
    folders = [PACKAGE_ROOT, *sorted(path for path in PACKAGE_ROOT.glob("**/*") if path.is_dir())]
    for folder in folders:
        if "__" in folder.name:
            continue
        target = DOCS_ROOT / folder.relative_to(PROJECT_ROOT)
        target.mkdir(parents=True, exist_ok=True)
        (target / ".pages").write_text(f"title: {folder.name}\n")
        for module in public_modules(folder):
            (target / f"{module.stem}.md").write_text(f"# {module.stem}\n::: {module_name(module)}\n")


if __name__ == "__main__":
    main()
