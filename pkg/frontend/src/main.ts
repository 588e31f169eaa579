/** Browser bootstrap: wires the controllers to the document.
 *
 * The page has two panes: the pending queue (left) and the user
 * editor (right).  Clicking an identifier in any queue row, or a user
 * in the picker, loads that user into the editor.
 */

import { AdminApi, ApiError } from "./api.js";
import { PendingQueueController, POLL_INTERVAL_MS } from "./queue.js";
import { UserEditController } from "./userEdit.js";

function must(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

export function bootstrap(root: Document = document): void {
  const api = new AdminApi("");
  const queuePane = must("queue");
  const editorPane = must("editor");
  const userList = must("users");

  const queue = new PendingQueueController(api, () => {
    queuePane.innerHTML = queue.render();
  });
  const editor = new UserEditController(api, () => {
    editorPane.innerHTML = editor.render();
  });

  async function renderUserList(): Promise<void> {
    const users = await api.listUsers();
    userList.innerHTML = users
      .map(
        (user) =>
          `<li><button data-action="edit-user" data-user-id="${user.user_id}">` +
          `${user.username}${user.active ? "" : " (inactive)"}</button></li>`,
      )
      .join("");
  }

  root.addEventListener("click", (event) => {
    const target = event.target as HTMLElement | null;
    const button = target?.closest<HTMLElement>("button[data-action]");
    if (!button) return;
    const pendingId = Number(button.dataset.pendingId);
    const userId = Number(button.dataset.userId);
    switch (button.dataset.action) {
      case "approve":
        queue.openPicker(pendingId);
        break;
      case "approve-as":
        void queue.approve(pendingId, userId).then(renderUserList);
        break;
      case "close-picker":
        queue.closePicker();
        break;
      case "reject":
        void queue.reject(pendingId);
        break;
      case "edit-user":
        void editor.load(userId);
        break;
    }
  });

  root.addEventListener("input", (event) => {
    const target = event.target as HTMLInputElement | null;
    if (!target) return;
    if (target.dataset.role === "picker-query") {
      queue.pickerQuery = target.value;
      queuePane.innerHTML = queue.render();
      return;
    }
    switch (target.name) {
      case "email":
        editor.edit.email = target.value;
        break;
      case "ts_principal":
        editor.edit.tsPrincipal = target.value;
        break;
      case "active":
        editor.edit.active = target.checked;
        break;
      case "new_mapping":
        editor.edit.newMappingSdn = target.value;
        break;
    }
  });

  root.addEventListener("change", (event) => {
    const target = event.target as HTMLInputElement | null;
    if (target?.dataset.role === "remove") {
      editor.toggleRemoval(Number(target.dataset.certId));
    }
  });

  root.addEventListener("submit", (event) => {
    const form = event.target as HTMLFormElement | null;
    if (!form?.dataset.userId) return;
    event.preventDefault();
    void editor.submit().then(renderUserList);
  });

  queue
    .refresh()
    .then(renderUserList)
    .catch((error: unknown) => {
      if (error instanceof ApiError && error.isAuth) {
        window.location.href = "/login?next=%2Fadmin%2F";
        return;
      }
      queuePane.innerHTML = `<p class="error">Failed to load: ${String(error)}</p>`;
    });
  queue.startPolling(POLL_INTERVAL_MS);
}

if (typeof document !== "undefined" && document.getElementById("queue")) {
  bootstrap();
}
