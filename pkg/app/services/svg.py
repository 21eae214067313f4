"""Minimal SVG element tree with deterministic serialization.

Coordinates are rounded to two decimals and attributes keep insertion order,
so the same element tree always serializes to the same bytes.
"""

from typing import List, Optional
from xml.sax.saxutils import escape

NS_SVG = "http://www.w3.org/2000/svg"
FONT_FAMILY = "Helvetica, Arial, sans-serif"
PRECISION = 2
QUOTE = {'"': "&quot;"}


def demangle(key: str) -> str:
    return key.rstrip("_").replace("_", "-")


def rounder(value, precision: int = PRECISION):
    if isinstance(value, float):
        rounded = round(value, precision)
        if rounded == int(rounded):
            return int(rounded)
        return rounded
    return value


def props_repr(attrs: dict) -> str:
    return " ".join(
        f'{demangle(key)}="{escape(str(rounder(value)), QUOTE)}"'
        for key, value in attrs.items()
        if value is not None
    )


class Element:
    def __init__(self, tag: str, text: Optional[str] = None, **attrs):
        self.tag = tag
        self.text = text
        self.attrs = attrs
        self.children: List["Element"] = []

    def add(self, *children: "Element") -> "Element":
        self.children.extend(children)
        return self

    def svg(self, indent: int = 0) -> str:
        pad = "  " * indent
        props = props_repr(self.attrs)
        head = f"<{self.tag} {props}" if props else f"<{self.tag}"
        if self.text is None and not self.children:
            return f"{pad}{head} />"
        if not self.children:
            return f"{pad}{head}>{escape(self.text)}</{self.tag}>"
        inner = "\n".join(child.svg(indent + 1) for child in self.children)
        body = escape(self.text) if self.text else ""
        return f"{pad}{head}>{body}\n{inner}\n{pad}</{self.tag}>"


def group(**attrs) -> Element:
    return Element("g", **attrs)


def rect(x: float, y: float, width: float, height: float, **attrs) -> Element:
    return Element("rect", x=float(x), y=float(y), width=float(width), height=float(height), **attrs)


def line(x1: float, y1: float, x2: float, y2: float, **attrs) -> Element:
    return Element("line", x1=float(x1), y1=float(y1), x2=float(x2), y2=float(y2), **attrs)


def circle(cx: float, cy: float, r: float, **attrs) -> Element:
    return Element("circle", cx=float(cx), cy=float(cy), r=float(r), **attrs)


def text(x: float, y: float, content: str, **attrs) -> Element:
    return Element("text", text=content, x=float(x), y=float(y), **attrs)


def title(content: str) -> Element:
    return Element("title", text=content)


class Document(Element):
    """Root <svg> element with a white background"""

    def __init__(self, width: int, height: int, **attrs):
        super().__init__(
            "svg",
            xmlns=NS_SVG,
            width=int(width),
            height=int(height),
            viewBox=f"0 0 {int(width)} {int(height)}",
            font_family=FONT_FAMILY,
            **attrs,
        )
        self.width = int(width)
        self.height = int(height)
        self.add(rect(0, 0, width, height, fill="#ffffff"))

    def render(self) -> str:
        return '<?xml version="1.0" encoding="UTF-8"?>\n' + self.svg() + "\n"


def hex_color(rgb) -> str:
    return "#" + "".join(f"{max(0, min(255, int(round(c)))):02x}" for c in rgb)


def blend(low: str, high: str, t: float) -> str:
    """Linear interpolation between two #rrggbb colors, t clipped to [0, 1]"""
    t = min(1.0, max(0.0, t))
    a = [int(low[i:i + 2], 16) for i in (1, 3, 5)]
    b = [int(high[i:i + 2], 16) for i in (1, 3, 5)]
    return hex_color([x + (y - x) * t for x, y in zip(a, b)])
