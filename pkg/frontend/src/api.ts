/** Typed client for the gateway admin API.
 *
 * Every request carries the version header the server insists on; a
 * non-2xx response becomes an ApiError carrying the HTTP status and
 * the server's error message, so callers can treat 409 (uniqueness
 * conflicts) differently from everything else.
 */

import type { AdminUser, CertMapping, PendingCredential, UserPatch } from "./types.js";

export const API_VERSION = "1";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }

  get isConflict(): boolean {
    return this.status === 409;
  }

  get isAuth(): boolean {
    return this.status === 401 || this.status === 403;
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class AdminApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = {
      method,
      headers: {
        "X-Admin-Api-Version": API_VERSION,
        "Content-Type": "application/json",
      },
    };
    if (body !== undefined) {
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchImpl(this.baseUrl + path, init);
    if (!response.ok) {
      let message = `HTTP ${response.status}`;
      try {
        const payload = (await response.json()) as { error?: string };
        if (payload.error) message = payload.error;
      } catch {
        // Non-JSON error body; keep the generic message.
      }
      throw new ApiError(response.status, message);
    }
    if (response.status === 204) {
      return undefined as T;
    }
    return (await response.json()) as T;
  }

  async listUsers(): Promise<AdminUser[]> {
    const body = await this.call<{ users: AdminUser[] }>("GET", "/api/admin/users");
    return body.users;
  }

  getUser(userId: number): Promise<AdminUser> {
    return this.call("GET", `/api/admin/users/${userId}`);
  }

  createUser(username: string, email: string): Promise<AdminUser> {
    return this.call("POST", "/api/admin/users", { username, email });
  }

  patchUser(userId: number, patch: UserPatch): Promise<AdminUser> {
    return this.call("PATCH", `/api/admin/users/${userId}`, patch);
  }

  mapCertificate(
    userId: number,
    subjectDn: string,
    notAfter?: string,
  ): Promise<Pick<CertMapping, "cert_id">> {
    return this.call("POST", `/api/admin/users/${userId}/certs`, {
      subject_dn: subjectDn,
      not_after: notAfter ?? null,
    });
  }

  removeCertificate(certId: number): Promise<void> {
    return this.call("DELETE", `/api/admin/certs/${certId}`);
  }

  async listPending(): Promise<PendingCredential[]> {
    const body = await this.call<{ pending: PendingCredential[] }>(
      "GET",
      "/api/admin/pending",
    );
    return body.pending;
  }

  approvePending(pendingId: number, userId: number): Promise<void> {
    return this.call("POST", `/api/admin/pending/${pendingId}/approve`, {
      user_id: userId,
    });
  }

  rejectPending(pendingId: number): Promise<void> {
    return this.call("POST", `/api/admin/pending/${pendingId}/reject`);
  }
}
