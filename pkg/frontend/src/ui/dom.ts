// Tiny DOM construction helper: h("div", {class: "x"}, child, "text").
// Attribute "onclick"/"onsubmit"/... values attach as listeners.

export type Child = Node | string | null | undefined;

export function h(
  tag: string,
  attrs: Record<string, string | EventListener | boolean> = {},
  ...children: Child[]
): HTMLElement {
  const el = document.createElement(tag);
  for (const [name, value] of Object.entries(attrs)) {
    if (typeof value === "function") {
      el.addEventListener(name.replace(/^on/, ""), value);
    } else if (typeof value === "boolean") {
      if (value) el.setAttribute(name, "");
    } else {
      el.setAttribute(name, value);
    }
  }
  for (const child of children) {
    if (child == null) continue;
    el.append(typeof child === "string" ? document.createTextNode(child) : child);
  }
  return el;
}

export function clear(el: HTMLElement): void {
  while (el.firstChild) el.removeChild(el.firstChild);
}

export function inputValue(root: ParentNode, selector: string): string {
  const el = root.querySelector(selector) as HTMLInputElement | HTMLTextAreaElement | null;
  return el ? el.value.trim() : "";
}
