/** End-to-end console behavior against a real gateway process.
 *
 * A helper script boots a disposable gateway over plain HTTP with an
 * admin session pre-minted and one pending federated credential
 * seeded.  Everything here goes through the same HTTP surface a
 * browser would use.
 */

import { spawn, type ChildProcess } from "node:child_process";
import { createInterface } from "node:readline";
import { fileURLToPath } from "node:url";
import { dirname, join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { AdminApi, ApiError, type FetchLike } from "../src/api.js";
import { PendingQueueController } from "../src/queue.js";
import { UserEditController } from "../src/userEdit.js";

interface ServerInfo {
  base_url: string;
  cookie: string;
  admin_user_id: number;
  admin_eppn: string;
  jdoe_user_id: number;
  jdoe_eppn: string;
  jdoe_sdn: string;
  pending_eppn: string;
}

let child: ChildProcess;
let info: ServerInfo;
let api: AdminApi;

function cookieFetch(): FetchLike {
  return (url, init) =>
    fetch(url, {
      ...init,
      headers: { ...(init?.headers as Record<string, string>), Cookie: info.cookie },
    });
}

beforeAll(async () => {
  const script = join(
    dirname(fileURLToPath(import.meta.url)),
    "support",
    "fixture_server.py",
  );
  child = spawn("python3", [script], { stdio: ["pipe", "pipe", "inherit"] });
  info = await new Promise<ServerInfo>((resolve, reject) => {
    const timer = setTimeout(
      () => reject(new Error("gateway did not start within 60 s")),
      60_000,
    );
    createInterface({ input: child.stdout! }).once("line", (line) => {
      clearTimeout(timer);
      resolve(JSON.parse(line) as ServerInfo);
    });
    child.once("exit", (code) => reject(new Error(`gateway exited early (${code})`)));
  });
  api = new AdminApi(info.base_url, cookieFetch());
}, 90_000);

afterAll(() => {
  child?.stdin?.end();
  child?.kill();
});

describe("console against a live gateway", () => {
  it("rejects requests without the admin session", async () => {
    const anonymous = new AdminApi(info.base_url);
    const error = (await anonymous.listUsers().catch((e: unknown) => e)) as ApiError;
    expect(error).toBeInstanceOf(ApiError);
    expect(error.status).toBe(401);
  });

  it("approve-from-queue links the credential to a new account", async () => {
    const queue = new PendingQueueController(api);
    await queue.refresh();
    const row = queue.rows.find((r) => r.identifier === info.pending_eppn);
    expect(row).toBeDefined();
    expect(queue.render()).toContain(info.pending_eppn);

    const created = await api.createUser("newcomer", info.pending_eppn);
    await queue.approve(row!.pending_id, created.user_id);

    expect(queue.rows.find((r) => r.identifier === info.pending_eppn)).toBeUndefined();
    // The state change is visible through the primary interface: the
    // account now owns the principal, so the next login will succeed.
    const user = await api.getUser(created.user_id);
    expect(user.ts_principal).toBe(info.pending_eppn);
  });

  it("user edit removes a mapping and clears the principal", async () => {
    const view = new UserEditController(api);
    await view.load(info.jdoe_user_id);
    expect(view.user!.mappings.map((m) => m.subject_dn)).toEqual([info.jdoe_sdn]);
    expect(view.render()).toContain("Remove?");

    view.toggleRemoval(view.user!.mappings[0]!.cert_id);
    view.edit.tsPrincipal = "";
    await view.submit();
    expect(view.errors.size).toBe(0);

    const user = await api.getUser(info.jdoe_user_id);
    expect(user.mappings).toEqual([]);
    expect(user.ts_principal).toBeNull();
  });

  it("restores the credentials through the editor", async () => {
    const view = new UserEditController(api);
    await view.load(info.jdoe_user_id);
    view.edit.tsPrincipal = info.jdoe_eppn;
    view.edit.newMappingSdn = info.jdoe_sdn;
    await view.submit();
    expect(view.errors.size).toBe(0);

    const user = await api.getUser(info.jdoe_user_id);
    expect(user.ts_principal).toBe(info.jdoe_eppn);
    expect(user.mappings.map((m) => m.subject_dn)).toEqual([info.jdoe_sdn]);
  });

  it("renders a 409 inline when the principal belongs to someone else", async () => {
    const users = await api.listUsers();
    const newcomer = users.find((u) => u.username === "newcomer")!;

    const view = new UserEditController(api);
    await view.load(newcomer.user_id);
    view.edit.tsPrincipal = info.admin_eppn;
    await view.submit();

    expect(view.errors.get("ts_principal")).toMatch(/^conflict: /);
    expect(view.render()).toContain('role="alert"');

    // Nothing changed server-side.
    const unchanged = await api.getUser(newcomer.user_id);
    expect(unchanged.ts_principal).toBe(info.pending_eppn);
  });

  it("renders a 409 inline for a duplicate certificate mapping", async () => {
    const view = new UserEditController(api);
    await view.load(info.admin_user_id);
    view.edit.newMappingSdn = info.jdoe_sdn;
    await view.submit();

    expect(view.errors.get("new-mapping")).toMatch(/^conflict: /);
    expect(view.render()).toContain("conflict:");
    const admin = await api.getUser(info.admin_user_id);
    expect(admin.mappings).toEqual([]);
  });
});
