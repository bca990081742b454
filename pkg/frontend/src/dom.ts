/** Tiny element builder; keeps the views free of framework weight. */

type Child = Node | string | null | undefined;

export function h<K extends keyof HTMLElementTagNameMap>(
    tag: K,
    attrs: Record<string, string | boolean | ((event: Event) => void)> = {},
    ...children: Child[]
): HTMLElementTagNameMap[K] {
    const el = document.createElement(tag);
    for (const [key, value] of Object.entries(attrs)) {
        if (typeof value === 'function') {
            el.addEventListener(key.replace(/^on/, '').toLowerCase(), value);
        } else if (typeof value === 'boolean') {
            if (value) el.setAttribute(key, '');
            (el as unknown as Record<string, unknown>)[key] = value;
        } else {
            el.setAttribute(key, value);
        }
    }
    for (const child of children) {
        if (child === null || child === undefined) continue;
        el.append(child instanceof Node ? child : document.createTextNode(child));
    }
    return el;
}

export function clear(el: Element): void {
    while (el.firstChild) el.removeChild(el.firstChild);
}
