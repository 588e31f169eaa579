/** User editor: account fields, certificate-mapping rows with remove
 * checkboxes, and a single new-mapping entry field.
 *
 * Submission batches the changes into individual API calls; each item
 * that fails is reported next to the thing it concerns (a field, a
 * mapping row, or the new-mapping input) while the rest still apply.
 */

import { AdminApi, ApiError } from "./api.js";
import { errorBadge, escapeHtml } from "./html.js";
import type { AdminUser, UserPatch } from "./types.js";

export interface EditState {
  email: string;
  tsPrincipal: string;
  active: boolean;
  /** cert_ids ticked for removal. */
  removals: Set<number>;
  newMappingSdn: string;
  newMappingNotAfter: string;
}

export class UserEditController {
  user: AdminUser | null = null;
  edit: EditState = emptyEdit();
  /** Errors keyed by item: "email", "ts_principal", "active", "new-mapping", or "cert-<id>". */
  errors = new Map<string, string>();

  constructor(
    private readonly api: AdminApi,
    private readonly onChange: () => void = () => {},
  ) {}

  async load(userId: number): Promise<void> {
    this.user = await this.api.getUser(userId);
    this.edit = {
      email: this.user.email,
      tsPrincipal: this.user.ts_principal ?? "",
      active: this.user.active,
      removals: new Set(),
      newMappingSdn: "",
      newMappingNotAfter: "",
    };
    this.errors.clear();
    this.onChange();
  }

  toggleRemoval(certId: number): void {
    if (this.edit.removals.has(certId)) {
      this.edit.removals.delete(certId);
    } else {
      this.edit.removals.add(certId);
    }
    this.onChange();
  }

  /** Field updates that differ from the loaded record. */
  private buildPatch(): UserPatch {
    if (!this.user) return {};
    const patch: UserPatch = {};
    if (this.edit.email !== this.user.email) {
      patch.email = this.edit.email;
    }
    const principal = this.edit.tsPrincipal.trim() || null;
    if (principal !== this.user.ts_principal) {
      patch.ts_principal = principal;
    }
    if (this.edit.active !== this.user.active) {
      patch.active = this.edit.active;
    }
    return patch;
  }

  async submit(): Promise<void> {
    if (!this.user) throw new Error("no user loaded");
    this.errors.clear();

    const patch = this.buildPatch();
    if (Object.keys(patch).length > 0) {
      try {
        await this.api.patchUser(this.user.user_id, patch);
      } catch (error) {
        // The server applies a PATCH as one unit; pin the message to
        // the field most likely at fault (uniqueness conflicts can
        // only come from the principal).
        const field =
          error instanceof ApiError && error.isConflict ? "ts_principal" : "email";
        this.errors.set(field, this.describe(error));
      }
    }

    for (const certId of this.edit.removals) {
      try {
        await this.api.removeCertificate(certId);
      } catch (error) {
        this.errors.set(`cert-${certId}`, this.describe(error));
      }
    }

    if (this.edit.newMappingSdn.trim()) {
      try {
        await this.api.mapCertificate(
          this.user.user_id,
          this.edit.newMappingSdn.trim(),
          this.edit.newMappingNotAfter.trim() || undefined,
        );
      } catch (error) {
        this.errors.set("new-mapping", this.describe(error));
      }
    }

    // Reload the record so the view reflects what actually applied,
    // then restore the failure notes and any unapplied input so the
    // operator can correct and resubmit.
    const failed = new Map(this.errors);
    const previous = this.edit;
    await this.load(this.user.user_id);
    this.errors = failed;
    if (failed.has("new-mapping")) {
      this.edit.newMappingSdn = previous.newMappingSdn;
      this.edit.newMappingNotAfter = previous.newMappingNotAfter;
    }
    if (failed.has("ts_principal")) {
      this.edit.tsPrincipal = previous.tsPrincipal;
    }
    if (failed.has("email")) {
      this.edit.email = previous.email;
    }
    this.onChange();
  }

  hasError(key: string): boolean {
    return this.errors.has(key);
  }

  private describe(error: unknown): string {
    if (error instanceof ApiError) {
      return error.isConflict ? `conflict: ${error.message}` : error.message;
    }
    return String(error);
  }

  render(): string {
    if (!this.user) return "<p>Loading…</p>";
    const rows = this.user.mappings
      .map(
        (mapping) =>
          `<tr data-cert-id="${mapping.cert_id}">` +
          `<td class="sdn">${escapeHtml(mapping.subject_dn)}</td>` +
          `<td>${escapeHtml(mapping.not_after ?? "—")}</td>` +
          `<td><label>Remove? <input type="checkbox" data-role="remove" ` +
          `data-cert-id="${mapping.cert_id}"` +
          (this.edit.removals.has(mapping.cert_id) ? " checked" : "") +
          `></label>${errorBadge(this.errors.get(`cert-${mapping.cert_id}`))}</td></tr>`,
      )
      .join("");
    return (
      `<form data-user-id="${this.user.user_id}">` +
      `<h2>${escapeHtml(this.user.username)}</h2>` +
      `<p><label>Email <input name="email" value="${escapeHtml(this.edit.email)}"></label>` +
      errorBadge(this.errors.get("email")) +
      `</p>` +
      `<p><label>Trusted principal <input name="ts_principal" ` +
      `value="${escapeHtml(this.edit.tsPrincipal)}"></label>` +
      errorBadge(this.errors.get("ts_principal")) +
      `</p>` +
      `<p><label>Active <input type="checkbox" name="active"` +
      (this.edit.active ? " checked" : "") +
      `></label></p>` +
      `<h3>Certificate mappings</h3>` +
      `<table><thead><tr><th>Subject DN</th><th>Not after</th><th></th></tr></thead>` +
      `<tbody>${rows}</tbody></table>` +
      `<p><label>New certificate mapping ` +
      `<input name="new_mapping" placeholder="Subject DN" ` +
      `value="${escapeHtml(this.edit.newMappingSdn)}"></label>` +
      errorBadge(this.errors.get("new-mapping")) +
      `</p>` +
      `<button type="submit">Save</button>` +
      `</form>`
    );
  }
}

function emptyEdit(): EditState {
  return {
    email: "",
    tsPrincipal: "",
    active: true,
    removals: new Set(),
    newMappingSdn: "",
    newMappingNotAfter: "",
  };
}
