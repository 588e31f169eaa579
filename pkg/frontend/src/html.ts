/** Tiny HTML-string helpers shared by the views. */

export function escapeHtml(value: string): string {
  return value
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

export function errorBadge(message: string | undefined): string {
  if (!message) return "";
  return `<span class="error" role="alert">${escapeHtml(message)}</span>`;
}
