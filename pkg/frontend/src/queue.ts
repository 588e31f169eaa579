/** Pending-credential queue: the review-and-approve workflow.
 *
 * Approvals are optimistic — the row disappears immediately and comes
 * back with an inline notice if the server refuses (for example when
 * another administrator already approved it and the mapping now
 * conflicts).
 */

import { AdminApi, ApiError } from "./api.js";
import { errorBadge, escapeHtml } from "./html.js";
import type { AdminUser, PendingCredential } from "./types.js";

export const POLL_INTERVAL_MS = 5000;

export class PendingQueueController {
  rows: PendingCredential[] = [];
  users: AdminUser[] = [];
  /** Inline notices keyed by pending_id. */
  notices = new Map<number, string>();
  /** pending_id whose user picker is open, if any. */
  pickerFor: number | null = null;
  pickerQuery = "";

  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private readonly api: AdminApi,
    private readonly onChange: () => void = () => {},
  ) {}

  async refresh(): Promise<void> {
    [this.rows, this.users] = await Promise.all([
      this.api.listPending(),
      this.api.listUsers(),
    ]);
    this.onChange();
  }

  startPolling(intervalMs: number = POLL_INTERVAL_MS): void {
    this.stopPolling();
    this.timer = setInterval(() => {
      void this.refresh().catch(() => {
        // Transient polling failure: keep the last good view.
      });
    }, intervalMs);
  }

  stopPolling(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  openPicker(pendingId: number): void {
    this.pickerFor = pendingId;
    this.pickerQuery = "";
    this.onChange();
  }

  closePicker(): void {
    this.pickerFor = null;
    this.onChange();
  }

  /** Users matching the picker query by username or email. */
  filteredUsers(): AdminUser[] {
    const query = this.pickerQuery.trim().toLowerCase();
    if (!query) return this.users;
    return this.users.filter(
      (user) =>
        user.username.toLowerCase().includes(query) ||
        user.email.toLowerCase().includes(query),
    );
  }

  async approve(pendingId: number, userId: number): Promise<void> {
    const snapshot = this.rows;
    this.rows = this.rows.filter((row) => row.pending_id !== pendingId);
    this.notices.delete(pendingId);
    this.pickerFor = null;
    this.onChange();
    try {
      await this.api.approvePending(pendingId, userId);
    } catch (error) {
      // Roll the optimistic removal back and pin the cause to the row.
      this.rows = snapshot;
      this.notices.set(pendingId, this.describe(error));
      this.onChange();
      return;
    }
    await this.refresh();
  }

  async reject(pendingId: number): Promise<void> {
    const snapshot = this.rows;
    this.rows = this.rows.filter((row) => row.pending_id !== pendingId);
    this.notices.delete(pendingId);
    this.onChange();
    try {
      await this.api.rejectPending(pendingId);
    } catch (error) {
      this.rows = snapshot;
      this.notices.set(pendingId, this.describe(error));
      this.onChange();
      return;
    }
    await this.refresh();
  }

  private describe(error: unknown): string {
    if (error instanceof ApiError) {
      return error.isConflict ? `conflict: ${error.message}` : error.message;
    }
    return String(error);
  }

  render(): string {
    if (this.rows.length === 0) {
      return '<p class="empty">No pending credentials.</p>';
    }
    const rows = this.rows
      .map((row) => {
        const picker =
          this.pickerFor === row.pending_id ? this.renderPicker(row) : "";
        return (
          `<tr data-pending-id="${row.pending_id}">` +
          `<td>${escapeHtml(row.kind)}</td>` +
          `<td class="identifier">${escapeHtml(row.identifier)}</td>` +
          `<td>${escapeHtml(row.context)}</td>` +
          `<td>${row.attempt_count}</td>` +
          `<td>` +
          `<button data-action="approve" data-pending-id="${row.pending_id}">Approve…</button> ` +
          `<button data-action="reject" data-pending-id="${row.pending_id}">Reject</button>` +
          errorBadge(this.notices.get(row.pending_id)) +
          `</td></tr>` +
          picker
        );
      })
      .join("");
    return (
      "<table><thead><tr><th>Kind</th><th>Identifier</th><th>Context</th>" +
      "<th>Attempts</th><th>Actions</th></tr></thead>" +
      `<tbody>${rows}</tbody></table>`
    );
  }

  private renderPicker(row: PendingCredential): string {
    const options = this.filteredUsers()
      .map(
        (user) =>
          `<li><button data-action="approve-as" data-pending-id="${row.pending_id}" ` +
          `data-user-id="${user.user_id}">${escapeHtml(user.username)} ` +
          `&lt;${escapeHtml(user.email)}&gt;</button></li>`,
      )
      .join("");
    return (
      `<tr class="picker"><td colspan="5">` +
      `<input data-role="picker-query" placeholder="Search username or email" ` +
      `value="${escapeHtml(this.pickerQuery)}">` +
      `<ul>${options}</ul>` +
      `<button data-action="close-picker">Cancel</button>` +
      `</td></tr>`
    );
  }
}
