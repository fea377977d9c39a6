"""Image slicing for puzzle rounds.

An input picture is cut into rows x cols equal rectangles.  To force
players to reason about picture content rather than pixel-perfect seam
matching, the outermost border of every piece is blanked to a neutral
gray before shipping.  Piece ids are decoupled from positions: the
ground-truth grid is a seeded shuffle, so an id reveals nothing about
where a piece belongs.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from PIL import Image, ImageDraw

from .model import PuzzleSpec

NEUTRAL_GRAY = (128, 128, 128)


class ImageTooSmall(Exception):
    """Pieces would be all border: nothing would remain visible."""


@dataclass(frozen=True)
class PieceManifest:
    """Everything a client needs to render its tray.

    display_order is the tray layout shuffle; it is independent of the
    ground-truth arrangement, which never leaves the server.
    """

    round_id: str
    rows: int
    cols: int
    piece_width: int
    piece_height: int
    pieces: Tuple[dict, ...]          # {"id", "asset", "width", "height"}
    display_order: Tuple[int, ...]

    def to_json(self) -> dict:
        return {
            "round_id": self.round_id,
            "rows": self.rows,
            "cols": self.cols,
            "piece_width": self.piece_width,
            "piece_height": self.piece_height,
            "pieces": list(self.pieces),
            "display_order": list(self.display_order),
        }

    @staticmethod
    def from_json(obj: dict) -> "PieceManifest":
        return PieceManifest(
            round_id=obj["round_id"], rows=obj["rows"], cols=obj["cols"],
            piece_width=obj["piece_width"], piece_height=obj["piece_height"],
            pieces=tuple(obj["pieces"]),
            display_order=tuple(obj["display_order"]))


def slice_image(image: Image.Image, rows: int, cols: int,
                erase_px: int = 2,
                neutral: Tuple[int, int, int] = NEUTRAL_GRAY
                ) -> List[List[Image.Image]]:
    """Cut the picture into a grid of border-blanked pieces.

    Returns pieces indexed [row][col] in picture order.  The image is
    scaled up to the nearest multiple of the grid when the divisions
    don't land on pixel boundaries.
    """
    if rows < 1 or cols < 1:
        raise ValueError("grid must be at least 1x1")
    if erase_px < 0:
        raise ValueError("erase_px must be non-negative")
    w, h = image.size
    if w % cols or h % rows:
        w = ((w + cols - 1) // cols) * cols
        h = ((h + rows - 1) // rows) * rows
        image = image.resize((w, h))
    pw, ph = w // cols, h // rows
    if pw < 2 * erase_px + 1 or ph < 2 * erase_px + 1:
        raise ImageTooSmall(
            f"{pw}x{ph} pieces cannot carry a {erase_px}px blank border")
    out: List[List[Image.Image]] = []
    for r in range(rows):
        row = []
        for c in range(cols):
            piece = image.crop((c * pw, r * ph, (c + 1) * pw, (r + 1) * ph))
            if erase_px > 0:
                piece = piece.convert("RGB")
                draw = ImageDraw.Draw(piece)
                draw.rectangle((0, 0, pw - 1, erase_px - 1), fill=neutral)
                draw.rectangle((0, ph - erase_px, pw - 1, ph - 1), fill=neutral)
                draw.rectangle((0, 0, erase_px - 1, ph - 1), fill=neutral)
                draw.rectangle((pw - erase_px, 0, pw - 1, ph - 1), fill=neutral)
            row.append(piece)
        out.append(row)
    return out


def synthetic_image(rows: int, cols: int, cell: int = 64,
                    seed: str = "0") -> Image.Image:
    """A generated picture with visually distinct cells, for rounds
    created without an uploaded image and for tests."""
    rng = random.Random(f"synthetic:{seed}")
    img = Image.new("RGB", (cols * cell, rows * cell))
    draw = ImageDraw.Draw(img)
    for r in range(rows):
        for c in range(cols):
            base = (rng.randrange(40, 216), rng.randrange(40, 216),
                    rng.randrange(40, 216))
            x0, y0 = c * cell, r * cell
            draw.rectangle((x0, y0, x0 + cell - 1, y0 + cell - 1), fill=base)
            # off-center blob breaks symmetry so neighbors look different
            bx = x0 + rng.randrange(cell // 4, 3 * cell // 4)
            by = y0 + rng.randrange(cell // 4, 3 * cell // 4)
            blob = tuple(min(255, v + 70) for v in base)
            draw.ellipse((bx - cell // 6, by - cell // 6,
                          bx + cell // 6, by + cell // 6), fill=blob)
    return img


def build_round_assets(image: Optional[Image.Image], rows: int, cols: int,
                       seed: str, out_dir: Path, round_id: str,
                       erase_px: int = 2,
                       spec: Optional[PuzzleSpec] = None
                       ) -> Tuple[PuzzleSpec, PieceManifest]:
    """Slice a round's picture and write piece files plus the manifest.

    The cell at grid position (r, c) becomes the piece whose id the
    seeded ground-truth shuffle assigned there.  A second, independent
    shuffle orders the tray display.  Passing spec pins the layout
    instead of drawing one from the seed.
    """
    if image is None:
        image = synthetic_image(rows, cols, seed=seed)
    if spec is None:
        spec = PuzzleSpec.shuffled(rows, cols, f"grid:{seed}")
    elif (spec.rows, spec.cols) != (rows, cols):
        raise ValueError("spec dimensions disagree with rows/cols")
    grid = spec.solution.grid
    tiles = slice_image(image, rows, cols, erase_px=erase_px)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pw, ph = tiles[0][0].size
    pieces = []
    for r in range(rows):
        for c in range(cols):
            pid = grid[r][c]
            asset = f"piece_{pid}.png"
            tiles[r][c].save(out_dir / asset)
            pieces.append({"id": pid, "asset": asset,
                           "width": pw, "height": ph})
    pieces.sort(key=lambda p: p["id"])
    order = list(range(rows * cols))
    random.Random(f"display:{seed}").shuffle(order)
    manifest = PieceManifest(round_id, rows, cols, pw, ph,
                             tuple(pieces), tuple(order))
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest.to_json(), fh, indent=2)
    return spec, manifest


def load_manifest(path: Path) -> PieceManifest:
    with open(path, "r", encoding="utf-8") as fh:
        return PieceManifest.from_json(json.load(fh))
