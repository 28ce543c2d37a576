"""Shared console output for the command line front-end."""

from typing import Any, Dict, Sequence

from rich.console import Console
from rich.table import Table

console = Console()

BOX_WIDTH = 58


def print_header(title: str) -> None:
    """Print a boxed, centered section title."""
    title_centered = title.upper().center(BOX_WIDTH - 4)
    console.print("┌" + "─" * BOX_WIDTH + "┐")
    console.print(f"│  [bold cyan]{title_centered}[/bold cyan]  │")
    console.print("└" + "─" * BOX_WIDTH + "┘")
    console.print()


def format_pass(passed: bool) -> str:
    if passed:
        return "[green]● pass[/green]"
    return "[red]○ fail[/red]"


def print_success(message: str) -> None:
    """Print a success message with checkmark."""
    console.print(f"[green]✓[/green] {message}")


def print_error(message: str) -> None:
    console.print(f"[red]✗[/red] {message}")


def print_warning(message: str) -> None:
    console.print(f"[yellow]⚠[/yellow] {message}")


def print_info(message: str) -> None:
    console.print(f"[cyan]{message}[/cyan]")


def checks_table(rows: Sequence[Dict[str, Any]], title: str = "Checks") -> Table:
    """Build a table of check name, reported scalar and verdict."""
    table = Table(title=title, title_style="bold cyan")
    table.add_column("Check", style="cyan")
    table.add_column("Scalar", style="dim")
    table.add_column("Value", justify="right")
    table.add_column("Result")
    for row in rows:
        table.add_row(row["check"], row["scalar_name"], f"{row['scalar']:.6g}", format_pass(row["passed"]))
    return table
